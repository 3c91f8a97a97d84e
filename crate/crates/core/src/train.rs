//! Reweighted denoising objective, iterative self-correction training and the
//! optimization loop for [`NeuralDenoiser`].

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, Gradients, NeuralDenoiser};
use crate::error::{Error, Result};
use crate::noise::{corrupt, NoiseSchedule};
use crate::task::Example;
use crate::types::{sample_categorical, CategoricalGrid, Condition, MaskedSequence, TokenSequence};

/// How the preliminary reconstruction is read off the stage-1 prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionRule {
    #[default]
    Sample,
    Argmax,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Heavy-ball momentum SGD.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// SGD momentum, or Adam's first-moment decay.
    pub momentum: f64,
    /// Adam's second-moment decay.
    pub beta2: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub t_floor: f64,
    pub isct_enabled: bool,
    pub isct_steps: usize,
    pub reconstruction: ReconstructionRule,
    /// Global-norm gradient clipping threshold.
    pub grad_clip: Option<f64>,
    /// Pad every target to this length; `None` pads to the batch maximum.
    pub canvas_len: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 5e-3,
            momentum: 0.9,
            beta2: 0.999,
            batch_size: 16,
            steps: 1000,
            t_floor: 1e-3,
            isct_enabled: false,
            isct_steps: 2,
            reconstruction: ReconstructionRule::Sample,
            grad_clip: Some(5.0),
            canvas_len: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.t_floor > 0.0 && self.t_floor < 1.0) {
            return bad("t_floor must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2 must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.isct_enabled && self.isct_steps < 2 {
            return bad("isct_steps must be at least 2 when ISCT is enabled");
        }
        Ok(())
    }

    fn stages(&self) -> usize {
        if self.isct_enabled {
            self.isct_steps
        } else {
            1
        }
    }
}

/// One reweighted cross-entropy term with the inputs needed to
/// differentiate it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub loss: f64,
    pub t: f64,
    pub corrupted: MaskedSequence,
    /// Per-position weight: the schedule weight at masked positions, else 0.
    pub weights: Vec<f64>,
}

impl LossTerm {
    pub fn masked_fraction(&self) -> f64 {
        self.corrupted.masked_count() as f64 / self.corrupted.len() as f64
    }
}

/// `weight * sum over masked l of -ln grid[l][target_l]`.
pub fn weighted_cross_entropy(target: &TokenSequence, z: &MaskedSequence, grid: &CategoricalGrid, weight: f64) -> f64 {
    z.masked_positions()
        .into_iter()
        .map(|l| -weight * grid.row(l)[target.ids()[l]].ln())
        .sum()
}

fn term_from_prediction(
    target: &TokenSequence,
    z: MaskedSequence,
    grid: &CategoricalGrid,
    schedule: NoiseSchedule,
) -> LossTerm {
    let t = z.time();
    let w = schedule.loss_weight(t);
    let loss = weighted_cross_entropy(target, &z, grid, w);
    let weights = (0..z.len()).map(|l| if z.is_masked(l) { w } else { 0.0 }).collect();
    LossTerm {
        loss,
        t,
        corrupted: z,
        weights,
    }
}

/// Corrupts `x` at time `t` and scores the denoiser's reconstruction of the
/// masked positions with weight `1/t`.
pub fn diffusion_loss<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    x: &TokenSequence,
    cond: &Condition,
    denoiser: &D,
    t: f64,
    rng: &mut R,
) -> Result<LossTerm> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Time(format!("loss time {t} must lie in (0, 1]")));
    }
    let schedule = NoiseSchedule::Linear;
    let z = corrupt(x, t, schedule, denoiser.vocab(), rng)?;
    let grid = denoiser.predict(&z, cond)?;
    Ok(term_from_prediction(x, z, &grid, schedule))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsctLoss {
    /// One term per stage; every stage is scored against the clean target.
    pub stages: Vec<LossTerm>,
    /// Reconstructions fed to stages `2..`.
    pub reconstructions: Vec<TokenSequence>,
}

impl IsctLoss {
    pub fn total(&self) -> f64 {
        self.stages.iter().map(|s| s.loss).sum()
    }
}

/// Builds the preliminary reconstruction from a prediction grid: revealed
/// positions keep their token; masked ones are drawn (or argmaxed) from
/// their row.
pub fn reconstruct<R: Rng + ?Sized>(
    z: &MaskedSequence,
    grid: &CategoricalGrid,
    rule: ReconstructionRule,
    rng: &mut R,
) -> Vec<usize> {
    (0..z.len())
        .map(|l| {
            if !z.is_masked(l) {
                z.ids()[l]
            } else {
                match rule {
                    ReconstructionRule::Sample => sample_categorical(grid.row(l), rng),
                    ReconstructionRule::Argmax => grid.row_argmax(l),
                }
            }
        })
        .collect()
}

/// Multi-stage self-correction loss. Stage 1 is [`diffusion_loss`] on `x`;
/// each later stage re-corrupts the previous stage's reconstruction at a
/// fresh time and again scores against `x`. Reconstructions are data, not
/// differentiated through.
pub fn isct_loss<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    x: &TokenSequence,
    cond: &Condition,
    denoiser: &D,
    stages: usize,
    t_floor: f64,
    rule: ReconstructionRule,
    rng: &mut R,
) -> Result<IsctLoss> {
    if stages == 0 {
        return Err(Error::Config("at least one stage required".into()));
    }
    let vocab = denoiser.vocab();
    let schedule = NoiseSchedule::Linear;
    let mut out = IsctLoss {
        stages: Vec::with_capacity(stages),
        reconstructions: Vec::new(),
    };
    let mut source = x.clone();
    for stage in 0..stages {
        let t = rng.gen_range(t_floor..=1.0);
        let z = corrupt(&source, t, schedule, vocab, rng)?;
        let grid = denoiser.predict(&z, cond)?;
        if stage + 1 < stages {
            let next = reconstruct(&z, &grid, rule, rng);
            source = TokenSequence::new(next, vocab)?;
            out.reconstructions.push(source.clone());
        }
        out.stages.push(term_from_prediction(x, z, &grid, schedule));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub stage1_loss: f64,
    pub stage2_loss: f64,
    pub masked_fraction: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<LossRecord>,
}

struct ExampleStats {
    stage1: f64,
    later: f64,
    masked_fraction: f64,
    grads: Gradients,
}

fn step_rng(seed: u64, step: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

fn example_gradients(
    model: &NeuralDenoiser,
    ex: &Example,
    target: &TokenSequence,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ExampleStats> {
    let loss = isct_loss(
        target,
        &ex.cond,
        model,
        config.stages(),
        config.t_floor,
        config.reconstruction,
        rng,
    )?;
    let mut grads = Gradients::zeros_like(model);
    for term in &loss.stages {
        if term.corrupted.masked_count() == 0 {
            continue;
        }
        let (_, g) = model.backward(&term.corrupted, &ex.cond, target.ids(), &term.weights)?;
        grads.add_assign(&g);
    }
    Ok(ExampleStats {
        stage1: loss.stages[0].loss,
        later: loss.stages[1..].iter().map(|s| s.loss).sum(),
        masked_fraction: loss.stages[0].masked_fraction(),
        grads,
    })
}

/// First and second moment buffers.
struct OptimizerState {
    first: Gradients,
    second: Gradients,
    step: i32,
}

impl OptimizerState {
    fn new(model: &NeuralDenoiser) -> Self {
        Self {
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
            step: 0,
        }
    }

    fn apply(&mut self, model: &mut NeuralDenoiser, grads: &Gradients, config: &TrainConfig) {
        self.step += 1;
        let (lr, b1, b2) = (config.learning_rate, config.momentum, config.beta2);
        let (c1, c2) = (1.0 - b1.powi(self.step), 1.0 - b2.powi(self.step));
        let tensors = model.tensors_mut().iter_mut().zip(&grads.tensors);
        for ((param, g), (m, v)) in tensors.zip(self.first.tensors.iter_mut().zip(self.second.tensors.iter_mut())) {
            for (k, p) in param.data.iter_mut().enumerate() {
                let gi = g.data[k];
                match config.optimizer {
                    Optimizer::Sgd => {
                        m.data[k] = b1 * m.data[k] + gi;
                        *p -= lr * m.data[k];
                    }
                    Optimizer::Adam => {
                        m.data[k] = b1 * m.data[k] + (1.0 - b1) * gi;
                        v.data[k] = b2 * v.data[k] + (1.0 - b2) * gi * gi;
                        *p -= lr * (m.data[k] / c1) / ((v.data[k] / c2).sqrt() + 1e-8);
                    }
                }
            }
        }
    }
}

/// Mini-batch training with Adam or momentum SGD. Batches are drawn with
/// replacement; per-example work runs in parallel and gradients are reduced
/// in batch order, so results do not depend on the thread count.
pub fn train(dataset: &[Example], model: &mut NeuralDenoiser, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let max_len = model.config().max_len;
    if let Some(bad) = dataset.iter().find(|e| e.target.len() > max_len) {
        return Err(Error::Config(format!(
            "target of length {} exceeds model max_len {max_len}",
            bad.target.len()
        )));
    }
    if config.canvas_len.is_some_and(|c| c > max_len) {
        return Err(Error::Config("canvas_len exceeds model max_len".into()));
    }

    let vocab = model.vocab().clone();
    let mut optimizer = OptimizerState::new(model);
    let mut curve = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let started = Instant::now();
        let mut pick = step_rng(config.seed, step, u64::MAX);
        let batch: Vec<usize> = (0..config.batch_size).map(|_| pick.gen_range(0..dataset.len())).collect();
        let canvas = config
            .canvas_len
            .unwrap_or_else(|| batch.iter().map(|&i| dataset[i].target.len()).max().unwrap_or(1))
            .max(batch.iter().map(|&i| dataset[i].target.len()).max().unwrap_or(1));

        let frozen: &NeuralDenoiser = model;
        let results: Vec<Result<ExampleStats>> = batch
            .par_iter()
            .enumerate()
            .map(|(k, &i)| {
                let ex = &dataset[i];
                let target = ex.target.padded(canvas, &vocab);
                let mut rng = step_rng(config.seed, step, k as u64);
                example_gradients(frozen, ex, &target, config, &mut rng)
            })
            .collect();

        let mut total = Gradients::zeros_like(model);
        let (mut s1, mut s2, mut frac) = (0.0, 0.0, 0.0);
        for (k, r) in results.into_iter().enumerate() {
            let stats = r?;
            if !(stats.stage1 + stats.later).is_finite() {
                return Err(Error::NonFiniteLoss { step, batch_index: k });
            }
            s1 += stats.stage1;
            s2 += stats.later;
            frac += stats.masked_fraction;
            total.add_assign(&stats.grads);
        }
        let b = config.batch_size as f64;
        total.scale(1.0 / b);
        if let Some(clip) = config.grad_clip {
            let norm = total.global_norm();
            if norm > clip {
                total.scale(clip / norm);
            }
        }
        optimizer.apply(model, &total, config);

        curve.push(LossRecord {
            step,
            loss: (s1 + s2) / b,
            stage1_loss: s1 / b,
            stage2_loss: s2 / b,
            masked_fraction: frac / b,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(TrainOutcome { curve })
}

pub const LOSS_CSV_HEADER: &str = "step,loss,stage1_loss,stage2_loss,masked_fraction,wall_ms";

pub fn write_loss_csv(path: &Path, curve: &[LossRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{LOSS_CSV_HEADER}")?;
    for r in curve {
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            r.step, r.loss, r.stage1_loss, r.stage2_loss, r.masked_fraction, r.wall_ms
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{AnalyticOracle, NeuralConfig};
    use crate::task::{TaskKind, TaskSpec};
    use crate::types::Vocabulary;

    /// Returns fixed rows regardless of input; revealed rows become one-hot.
    struct FixedRows {
        vocab: Vocabulary,
        row: Vec<f64>,
    }

    impl Denoiser for FixedRows {
        fn vocab(&self) -> &Vocabulary {
            &self.vocab
        }
        fn predict(&self, z: &MaskedSequence, _cond: &Condition) -> Result<CategoricalGrid> {
            let rows = (0..z.len())
                .map(|l| {
                    if z.is_masked(l) {
                        self.row.clone()
                    } else {
                        let mut r = vec![0.0; self.vocab.size()];
                        r[z.ids()[l]] = 1.0;
                        r
                    }
                })
                .collect();
            CategoricalGrid::new(rows, &self.vocab)
        }
    }

    fn cond() -> Condition {
        Condition::new(vec![vec![0.0]], 1.0).unwrap()
    }

    #[test]
    fn hand_computed_weighted_loss() {
        let vocab = Vocabulary::synthetic(2).unwrap();
        let x = TokenSequence::new(vec![0, 1], &vocab).unwrap();
        let z = MaskedSequence::new(vec![0, vocab.mask_id()], 0.5, &vocab).unwrap();
        let den = FixedRows {
            vocab: vocab.clone(),
            row: vec![0.5, 0.5, 0.0, 0.0],
        };
        let grid = den.predict(&z, &cond()).unwrap();
        let loss = weighted_cross_entropy(&x, &z, &grid, NoiseSchedule::Linear.loss_weight(0.5));
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
        // doubling t halves the weight on the same mask pattern
        let z2 = z.clone().with_time(1.0).unwrap();
        let l2 = weighted_cross_entropy(&x, &z2, &grid, NoiseSchedule::Linear.loss_weight(1.0));
        assert!((2.0 * l2 - loss).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_gives_zero_loss() {
        let vocab = Vocabulary::synthetic(2).unwrap();
        let x = TokenSequence::new(vec![0, 1, 1], &vocab).unwrap();
        let den = FixedRows {
            vocab: vocab.clone(),
            row: vec![0.5, 0.5, 0.0, 0.0],
        };
        // find a seed whose draw at small t masks nothing
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let term = diffusion_loss(&x, &cond(), &den, 1e-3, &mut rng).unwrap();
        assert_eq!(term.corrupted.masked_count(), 0);
        assert_eq!(term.loss, 0.0);
        assert!(diffusion_loss(&x, &cond(), &den, 0.0, &mut rng).is_err());
    }

    #[test]
    fn oracle_on_deterministic_task_has_zero_loss() {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 4, (3, 6), 0.0).with_seed(2);
        let oracle = AnalyticOracle::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for ex in spec.generate(10).unwrap() {
            for t in [0.1, 0.5, 1.0] {
                let term = diffusion_loss(&ex.target, &ex.cond, &oracle, t, &mut rng).unwrap();
                assert_eq!(term.loss, 0.0);
            }
            let isct = isct_loss(&ex.target, &ex.cond, &oracle, 2, 1e-3, ReconstructionRule::Sample, &mut rng).unwrap();
            assert_eq!(isct.reconstructions[0], ex.target);
            assert_eq!(isct.total(), 0.0);
            assert!(isct.stages.iter().all(|s| s.loss == 0.0));
        }
    }

    #[test]
    fn isct_second_stage_scores_clean_target() {
        // Vocab w0, w1, EOS, MASK. Denoiser always predicts w1 with 0.9.
        let vocab = Vocabulary::synthetic(2).unwrap();
        let den = FixedRows {
            vocab: vocab.clone(),
            row: vec![0.1, 0.9, 0.0, 0.0],
        };
        let x = TokenSequence::new(vec![0], &vocab).unwrap();
        // Search for a seed where stage 1 masks, the reconstruction becomes
        // w1 != x, and stage 2 masks again.
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = isct_loss(&x, &cond(), &den, 2, 1e-3, ReconstructionRule::Sample, &mut rng).unwrap();
            let (s1, s2) = (&out.stages[0], &out.stages[1]);
            if s1.corrupted.masked_count() == 1 && out.reconstructions[0].ids() == [1] && s2.corrupted.masked_count() == 1 {
                let expected = -(0.1f64).ln() / s2.t;
                assert!((s2.loss - expected).abs() < 1e-12, "stage 2 must target x = w0");
                return;
            }
        }
        panic!("no seed produced the required draw pattern");
    }

    #[test]
    fn isct_with_empty_masks_is_zero() {
        let vocab = Vocabulary::synthetic(2).unwrap();
        let den = FixedRows {
            vocab: vocab.clone(),
            row: vec![0.5, 0.5, 0.0, 0.0],
        };
        let x = TokenSequence::new(vec![0, 1], &vocab).unwrap();
        for seed in 0..2000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = isct_loss(&x, &cond(), &den, 2, 1e-3, ReconstructionRule::Sample, &mut rng).unwrap();
            if out.stages.iter().all(|s| s.corrupted.masked_count() == 0) {
                assert_eq!(out.total(), 0.0);
                return;
            }
        }
        panic!("no seed left both stages unmasked");
    }

    fn tiny_setup(n: usize) -> (Vec<Example>, NeuralDenoiser) {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 4, (2, 4), 0.1).with_seed(3);
        let data = spec.generate(n).unwrap();
        let mut cfg = NeuralConfig::new(spec.feature_dim, spec.frames_per_token);
        cfg.d_model = 16;
        cfg.max_len = 8;
        let model = NeuralDenoiser::new(cfg, spec.vocab()).unwrap();
        (data, model)
    }

    #[test]
    fn zero_steps_is_identity() {
        let (data, mut model) = tiny_setup(8);
        let before = model.clone();
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let out = train(&data, &mut model, &cfg).unwrap();
        assert!(out.curve.is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, model) = tiny_setup(16);
        let cfg = TrainConfig {
            steps: 5,
            batch_size: 4,
            isct_enabled: true,
            ..TrainConfig::default()
        };
        let (mut a, mut b) = (model.clone(), model);
        let ca = train(&data, &mut a, &cfg).unwrap();
        let cb = train(&data, &mut b, &cfg).unwrap();
        assert_eq!(a, b);
        let strip = |c: &[LossRecord]| c.iter().map(|r| (r.loss, r.masked_fraction)).collect::<Vec<_>>();
        assert_eq!(strip(&ca.curve), strip(&cb.curve));
    }

    #[test]
    fn duplicated_example_doubles_gradient() {
        let (data, mut model) = tiny_setup(1);
        model.randomize(0.5, 1);
        let ex = &data[0];
        let cfg = TrainConfig::default();
        let g1 = example_gradients(&model, ex, &ex.target, &cfg, &mut step_rng(1, 0, 0)).unwrap().grads;
        let mut g2 = Gradients::zeros_like(&model);
        for _ in 0..2 {
            g2.add_assign(&example_gradients(&model, ex, &ex.target, &cfg, &mut step_rng(1, 0, 0)).unwrap().grads);
        }
        let mut doubled = g1.clone();
        doubled.scale(2.0);
        assert_eq!(g2, doubled);
    }

    #[test]
    fn full_batch_loss_decreases() {
        let (data, mut model) = tiny_setup(32);
        let vocab = model.vocab().clone();
        let full = |m: &NeuralDenoiser| -> f64 {
            // deterministic surrogate: all-masked canvas, weight 1
            data.iter()
                .map(|e| {
                    let z = MaskedSequence::fully_masked(e.target.len(), &vocab);
                    m.loss(&z, &e.cond, e.target.ids(), &vec![1.0; e.target.len()]).unwrap()
                })
                .sum()
        };
        let mut prev = full(&model);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            momentum: 0.0,
            grad_clip: None,
            ..TrainConfig::default()
        };
        for _ in 0..100 {
            let mut g = Gradients::zeros_like(&model);
            for e in &data {
                let z = MaskedSequence::fully_masked(e.target.len(), &vocab);
                let (_, gi) = model.backward(&z, &e.cond, e.target.ids(), &vec![1.0; e.target.len()]).unwrap();
                g.add_assign(&gi);
            }
            g.scale(1.0 / data.len() as f64);
            for (p, gi) in model.tensors_mut().iter_mut().zip(&g.tensors) {
                p.data.iter_mut().zip(&gi.data).for_each(|(a, b)| *a -= cfg.learning_rate * b);
            }
            let now = full(&model);
            assert!(now < prev, "loss went from {prev} to {now}");
            prev = now;
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = TrainConfig::default();
        assert!(TrainConfig { t_floor: 0.0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { isct_enabled: true, isct_steps: 1, ..base.clone() }.validate().is_err());
        let (data, mut model) = tiny_setup(2);
        assert!(train(&[], &mut model, &base).is_err());
        let cfg = TrainConfig { canvas_len: Some(100), ..base };
        assert!(train(&data, &mut model, &cfg).is_err());
    }
}
