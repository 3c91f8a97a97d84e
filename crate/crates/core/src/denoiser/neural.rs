//! A small position-wise network with hand-written backpropagation.
//!
//! Each canvas position builds its input from its own token, its left and
//! right neighbours, a position embedding, the mean of all condition frames
//! and the mean of the frames aligned with that position. Residual tanh layers
//! follow, then a linear read-out over the vocabulary with MASK excluded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Denoiser;
use crate::error::{Error, Result};
use crate::types::{CategoricalGrid, Condition, MaskedSequence, TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub d_model: usize,
    pub hidden_layers: usize,
    pub max_len: usize,
    pub cond_dim: usize,
    /// Frames aligned with each canvas position.
    pub frames_per_token: usize,
    pub seed: u64,
}

impl NeuralConfig {
    pub fn new(cond_dim: usize, frames_per_token: usize) -> Self {
        Self {
            d_model: 64,
            hidden_layers: 2,
            max_len: 64,
            cond_dim,
            frames_per_token,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn uniform(name: impl Into<String>, rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut t = Self::zeros(name, rows, cols);
        t.data.iter_mut().for_each(|v| *v = scale * (2.0 * rng.gen::<f64>() - 1.0));
        t
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

// Tensor slots in declaration order; hidden layers follow INPUT_BIAS.
const TOKEN: usize = 0;
const LEFT: usize = 1;
const RIGHT: usize = 2;
const POSITION: usize = 3;
const COND_GLOBAL: usize = 4;
const COND_LOCAL: usize = 5;
const INPUT_BIAS: usize = 6;
const FIRST_HIDDEN: usize = 7;

/// Gradient of the loss with respect to every parameter tensor, in the same
/// layout as [`NeuralDenoiser::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(model: &NeuralDenoiser) -> Self {
        Self {
            tensors: model
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.rows, t.cols))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDenoiser {
    config: NeuralConfig,
    vocab: Vocabulary,
    tensors: Vec<Tensor>,
}

struct PositionCache {
    /// `hidden[0]` is the input sum, `hidden[k + 1]` the output of layer `k`.
    hidden: Vec<Vec<f64>>,
    /// `tanh` activations per layer.
    act: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

struct CondSummary {
    global: Vec<f64>,
    local: Vec<Vec<f64>>,
}

impl NeuralDenoiser {
    /// Fan-in scaled uniform initialization; the read-out starts at zero.
    pub fn new(config: NeuralConfig, vocab: Vocabulary) -> Result<Self> {
        if config.d_model == 0 || config.max_len == 0 || config.cond_dim == 0 || config.frames_per_token == 0 {
            return Err(Error::Config("neural denoiser dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (v, d, c) = (vocab.size(), config.d_model, config.cond_dim);
        let emb = 1.0 / (d as f64).sqrt();
        let cond = 1.0 / (c as f64).sqrt();
        let mut tensors = vec![
            Tensor::uniform("token_embedding", v, d, emb, &mut rng),
            Tensor::uniform("left_embedding", v, d, emb, &mut rng),
            Tensor::uniform("right_embedding", v, d, emb, &mut rng),
            Tensor::uniform("position_embedding", config.max_len, d, emb, &mut rng),
            Tensor::uniform("cond_global", d, c, cond, &mut rng),
            Tensor::uniform("cond_local", d, c, cond, &mut rng),
            Tensor::zeros("input_bias", 1, d),
        ];
        for k in 0..config.hidden_layers {
            tensors.push(Tensor::uniform(format!("hidden{k}_weight"), d, d, emb, &mut rng));
            tensors.push(Tensor::zeros(format!("hidden{k}_bias"), 1, d));
        }
        tensors.push(Tensor::zeros("output_weight", v, d));
        tensors.push(Tensor::zeros("output_bias", 1, v));
        Ok(Self { config, vocab, tensors })
    }

    pub(crate) fn from_parts(config: NeuralConfig, vocab: Vocabulary, tensors: Vec<Tensor>) -> Result<Self> {
        let fresh = Self::new(config.clone(), vocab.clone())?;
        if fresh.tensors.len() != tensors.len()
            || fresh
                .tensors
                .iter()
                .zip(&tensors)
                .any(|(a, b)| a.name != b.name || a.rows != b.rows || a.cols != b.cols || b.data.len() != a.data.len())
        {
            return Err(Error::Checkpoint("tensor layout does not match the architecture".into()));
        }
        Ok(Self { config, vocab, tensors })
    }

    pub fn config(&self) -> &NeuralConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Overwrites every parameter with `U(-scale, scale)`; used by gradient
    /// checks, where a zero read-out would hide most of the network.
    pub fn randomize(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = scale * (2.0 * rng.gen::<f64>() - 1.0));
        }
    }

    fn output_weight(&self) -> &Tensor {
        &self.tensors[self.tensors.len() - 2]
    }

    fn output_bias(&self) -> &Tensor {
        &self.tensors[self.tensors.len() - 1]
    }

    fn check_inputs(&self, z: &MaskedSequence, cond: &Condition) -> Result<()> {
        if z.len() > self.config.max_len {
            return Err(Error::Dimension(format!(
                "canvas length {} exceeds max_len {}",
                z.len(),
                self.config.max_len
            )));
        }
        if cond.dim() != self.config.cond_dim {
            return Err(Error::Dimension(format!(
                "condition has {} features, model expects {}",
                cond.dim(),
                self.config.cond_dim
            )));
        }
        Ok(())
    }

    fn summarize(&self, cond: &Condition, len: usize) -> CondSummary {
        let dim = cond.dim();
        let frames = cond.frames();
        let mean = |slice: &[Vec<f64>]| {
            let mut m = vec![0.0; dim];
            if slice.is_empty() {
                return m;
            }
            for f in slice {
                m.iter_mut().zip(f).for_each(|(a, b)| *a += b);
            }
            let n = slice.len() as f64;
            m.iter_mut().for_each(|a| *a /= n);
            m
        };
        let stride = self.config.frames_per_token;
        let local = (0..len)
            .map(|l| {
                let lo = (l * stride).min(frames.len());
                let hi = ((l + 1) * stride).min(frames.len());
                mean(&frames[lo..hi])
            })
            .collect();
        CondSummary {
            global: mean(frames),
            local,
        }
    }

    fn forward_position(&self, ids: &[TokenId], pos: usize, summary: &CondSummary) -> PositionCache {
        let d = self.config.d_model;
        let t = &self.tensors;
        let mut h0 = t[INPUT_BIAS].data.clone();
        let add = |h: &mut [f64], v: &[f64]| h.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        add(&mut h0, t[TOKEN].row(ids[pos]));
        if pos > 0 {
            add(&mut h0, t[LEFT].row(ids[pos - 1]));
        }
        if pos + 1 < ids.len() {
            add(&mut h0, t[RIGHT].row(ids[pos + 1]));
        }
        add(&mut h0, t[POSITION].row(pos));
        for (tensor, input) in [(&t[COND_GLOBAL], &summary.global), (&t[COND_LOCAL], &summary.local[pos])] {
            for (j, h) in h0.iter_mut().enumerate() {
                *h += dot(tensor.row(j), input);
            }
        }

        let mut hidden = Vec::with_capacity(self.config.hidden_layers + 1);
        let mut act = Vec::with_capacity(self.config.hidden_layers);
        hidden.push(h0);
        for k in 0..self.config.hidden_layers {
            let w = &t[FIRST_HIDDEN + 2 * k];
            let b = &t[FIRST_HIDDEN + 2 * k + 1];
            let h = &hidden[k];
            let a: Vec<f64> = (0..d).map(|j| (dot(w.row(j), h) + b.data[j]).tanh()).collect();
            let next: Vec<f64> = h.iter().zip(&a).map(|(x, y)| x + y).collect();
            act.push(a);
            hidden.push(next);
        }

        let top = hidden.last().expect("input layer present");
        let (wo, bo) = (self.output_weight(), self.output_bias());
        let mask = self.vocab.mask_id();
        let logits: Vec<f64> = (0..self.vocab.size())
            .map(|v| if v == mask { f64::NEG_INFINITY } else { dot(wo.row(v), top) + bo.data[v] })
            .collect();
        PositionCache {
            hidden,
            act,
            probs: softmax(&logits),
        }
    }

    /// Weighted cross-entropy `sum_l w_l * -ln p_l[target_l]` over masked
    /// positions.
    pub fn loss(&self, z: &MaskedSequence, cond: &Condition, target: &[TokenId], weights: &[f64]) -> Result<f64> {
        self.check_loss_inputs(z, cond, target, weights)?;
        let summary = self.summarize(cond, z.len());
        Ok(z.masked_positions()
            .into_iter()
            .filter(|&p| weights[p] != 0.0)
            .map(|p| {
                let cache = self.forward_position(z.ids(), p, &summary);
                -weights[p] * cache.probs[target[p]].ln()
            })
            .sum())
    }

    fn check_loss_inputs(&self, z: &MaskedSequence, cond: &Condition, target: &[TokenId], weights: &[f64]) -> Result<()> {
        self.check_inputs(z, cond)?;
        if target.len() != z.len() || weights.len() != z.len() {
            return Err(Error::Dimension("target and weights must match the canvas length".into()));
        }
        Ok(())
    }

    /// Loss as in [`NeuralDenoiser::loss`] together with its gradient.
    pub fn backward(
        &self,
        z: &MaskedSequence,
        cond: &Condition,
        target: &[TokenId],
        weights: &[f64],
    ) -> Result<(f64, Gradients)> {
        self.check_loss_inputs(z, cond, target, weights)?;
        let summary = self.summarize(cond, z.len());
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let d = self.config.d_model;
        let ids = z.ids();
        let n_layers = self.config.hidden_layers;
        let out_w = self.tensors.len() - 2;
        let out_b = self.tensors.len() - 1;

        for pos in z.masked_positions() {
            let w = weights[pos];
            if w == 0.0 {
                continue;
            }
            let cache = self.forward_position(ids, pos, &summary);
            loss -= w * cache.probs[target[pos]].ln();

            let mut dlogits: Vec<f64> = cache.probs.iter().map(|p| w * p).collect();
            dlogits[target[pos]] -= w;

            let top = &cache.hidden[n_layers];
            let mut dh = vec![0.0; d];
            for (v, &g) in dlogits.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let wrow = self.output_weight().row(v);
                let grow = grads.tensors[out_w].row_mut(v);
                for j in 0..d {
                    grow[j] += g * top[j];
                    dh[j] += g * wrow[j];
                }
                grads.tensors[out_b].data[v] += g;
            }

            for k in (0..n_layers).rev() {
                let wk = &self.tensors[FIRST_HIDDEN + 2 * k];
                let h_in = &cache.hidden[k];
                let du: Vec<f64> = dh.iter().zip(&cache.act[k]).map(|(g, a)| g * (1.0 - a * a)).collect();
                let mut dh_in = dh.clone();
                for (j, &g) in du.iter().enumerate() {
                    let wrow = wk.row(j);
                    let grow = grads.tensors[FIRST_HIDDEN + 2 * k].row_mut(j);
                    for i in 0..d {
                        grow[i] += g * h_in[i];
                        dh_in[i] += g * wrow[i];
                    }
                    grads.tensors[FIRST_HIDDEN + 2 * k + 1].data[j] += g;
                }
                dh = dh_in;
            }

            let add = |t: &mut Tensor, r: usize, g: &[f64]| t.row_mut(r).iter_mut().zip(g).for_each(|(a, b)| *a += b);
            add(&mut grads.tensors[TOKEN], ids[pos], &dh);
            if pos > 0 {
                add(&mut grads.tensors[LEFT], ids[pos - 1], &dh);
            }
            if pos + 1 < ids.len() {
                add(&mut grads.tensors[RIGHT], ids[pos + 1], &dh);
            }
            add(&mut grads.tensors[POSITION], pos, &dh);
            add(&mut grads.tensors[INPUT_BIAS], 0, &dh);
            for (slot, input) in [(COND_GLOBAL, &summary.global), (COND_LOCAL, &summary.local[pos])] {
                let t = &mut grads.tensors[slot];
                for (j, &g) in dh.iter().enumerate() {
                    t.row_mut(j).iter_mut().zip(input.iter()).for_each(|(a, x)| *a += g * x);
                }
            }
        }
        Ok((loss, grads))
    }
}

impl Denoiser for NeuralDenoiser {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(&self, z: &MaskedSequence, cond: &Condition) -> Result<CategoricalGrid> {
        self.check_inputs(z, cond)?;
        let summary = self.summarize(cond, z.len());
        let width = self.vocab.size();
        let mut probs = vec![0.0; z.len() * width];
        for pos in 0..z.len() {
            let row = &mut probs[pos * width..(pos + 1) * width];
            if z.is_masked(pos) {
                row.copy_from_slice(&self.forward_position(z.ids(), pos, &summary).probs);
            } else {
                row[z.ids()[pos]] = 1.0;
            }
        }
        CategoricalGrid::from_flat(probs, &self.vocab)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= s);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{TaskKind, TaskSpec};

    fn setup(d_model: usize) -> (NeuralDenoiser, TaskSpec) {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 3, (3, 5), 0.2).with_seed(1);
        let mut cfg = NeuralConfig::new(spec.feature_dim, spec.frames_per_token);
        cfg.d_model = d_model;
        cfg.max_len = 8;
        (NeuralDenoiser::new(cfg, spec.vocab()).unwrap(), spec)
    }

    #[test]
    fn fresh_model_is_uniform_over_non_mask() {
        let (model, spec) = setup(16);
        let ex = &spec.generate(1).unwrap()[0];
        let z = MaskedSequence::fully_masked(6, model.vocab());
        let grid = model.predict(&z, &ex.cond).unwrap();
        let v = model.vocab();
        for row in grid.rows() {
            for (tok, &p) in row.iter().enumerate() {
                let want = if tok == v.mask_id() { 0.0 } else { 1.0 / (v.size() - 1) as f64 };
                assert!((p - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn revealed_rows_are_one_hot_and_output_deterministic() {
        let (mut model, spec) = setup(8);
        model.randomize(0.5, 3);
        let ex = &spec.generate(1).unwrap()[0];
        let v = model.vocab().clone();
        let z = MaskedSequence::new(vec![1, v.mask_id(), 0, v.mask_id()], 0.5, &v).unwrap();
        let a = model.predict(&z, &ex.cond).unwrap();
        let b = model.predict(&z, &ex.cond).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.row(0)[1], 1.0);
        assert_eq!(a.row(2)[0], 1.0);
        assert_eq!(a.row(1)[v.mask_id()], 0.0);
    }

    #[test]
    fn dimension_errors() {
        let (model, _) = setup(8);
        let v = model.vocab().clone();
        let cond = Condition::new(vec![vec![0.0; 7]], 1.0).unwrap();
        assert!(model.predict(&MaskedSequence::fully_masked(2, &v), &cond).is_err());
        let cond = Condition::new(vec![vec![0.0; 3]], 1.0).unwrap();
        assert!(model.predict(&MaskedSequence::fully_masked(9, &v), &cond).is_err());
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        let (mut model, spec) = setup(8);
        model.randomize(1.0, 5);
        let ex = &spec.generate(1).unwrap()[0];
        let z = MaskedSequence::fully_masked(ex.target.len(), model.vocab());
        let w = vec![0.0; z.len()];
        let (loss, g) = model.backward(&z, &ex.cond, ex.target.ids(), &w).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut model, spec) = setup(8);
        model.randomize(1.0, 9);
        let ex = &spec.generate(3).unwrap()[2];
        let v = model.vocab().clone();
        let mut ids = vec![v.mask_id(); ex.target.len()];
        ids[0] = ex.target.ids()[0];
        let z = MaskedSequence::new(ids, 0.7, &v).unwrap();
        let w: Vec<f64> = (0..z.len()).map(|i| 0.5 + i as f64).collect();
        let (_, grads) = model.backward(&z, &ex.cond, ex.target.ids(), &w).unwrap();
        let eps = 1e-4;
        for ti in 0..model.tensors.len() {
            let mut fd = vec![0.0; model.tensors[ti].data.len()];
            for j in 0..fd.len() {
                let orig = model.tensors[ti].data[j];
                model.tensors[ti].data[j] = orig + eps;
                let up = model.loss(&z, &ex.cond, ex.target.ids(), &w).unwrap();
                model.tensors[ti].data[j] = orig - eps;
                let down = model.loss(&z, &ex.cond, ex.target.ids(), &w).unwrap();
                model.tensors[ti].data[j] = orig;
                fd[j] = (up - down) / (2.0 * eps);
            }
            let a = &grads.tensors[ti].data;
            let diff: f64 = a.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + fd.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rel = if scale == 0.0 { 0.0 } else { diff / scale };
            assert!(rel <= 1e-4, "{}: relative error {rel}", model.tensors[ti].name);
        }
    }
}
