//! Parallel-unmasking decoders over the reverse process.
//!
//! Every decode starts from an all-MASK canvas at `t = 1` and walks the
//! uniform grid `t_k = 1 - k / max_nfe`, one denoiser evaluation per grid
//! step. On the last budgeted evaluation any position the strategy leaves
//! masked is filled with its row argmax, so `nfe <= max_nfe` always holds.
//! The output is truncated at the first EOS.

use std::cmp::Ordering;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::noise::{posterior_step_traced, NoiseSchedule};
use crate::types::{sample_categorical, CategoricalGrid, Condition, MaskedSequence, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Random,
    Dfm,
    ConfTopK,
    EbConf,
    PbebConf,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] = [
        SamplerKind::Random,
        SamplerKind::Dfm,
        SamplerKind::ConfTopK,
        SamplerKind::EbConf,
        SamplerKind::PbebConf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::Dfm => "dfm",
            SamplerKind::ConfTopK => "conf_top_k",
            SamplerKind::EbConf => "eb_conf",
            SamplerKind::PbebConf => "pbeb_conf",
        }
    }

    pub fn is_confidence_based(&self) -> bool {
        matches!(self, SamplerKind::ConfTopK | SamplerKind::EbConf | SamplerKind::PbebConf)
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SamplerKind::Random),
            "dfm" => Ok(SamplerKind::Dfm),
            "conf_top_k" | "top_k" => Ok(SamplerKind::ConfTopK),
            "eb_conf" => Ok(SamplerKind::EbConf),
            "pbeb_conf" => Ok(SamplerKind::PbebConf),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

/// Token chosen at a position selected by a confidence-based sampler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealRule {
    #[default]
    Argmax,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub max_nfe: usize,
    pub k: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub max_len: usize,
    pub seed: u64,
    pub reveal: RevealRule,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::PbebConf,
            max_nfe: 32,
            k: 1,
            gamma: 0.05,
            lambda: 0.2,
            max_len: 256,
            seed: 0,
            reveal: RevealRule::Argmax,
        }
    }
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_nfe == 0 {
            return Err(Error::Config("max_nfe must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if self.kind == SamplerKind::ConfTopK && self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.gamma >= 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config("gamma and lambda must be nonnegative".into()));
        }
        Ok(())
    }

    /// `t_k = 1 - k / max_nfe`.
    pub fn time_at(&self, k: usize) -> f64 {
        1.0 - k as f64 / self.max_nfe as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t_before: f64,
    pub t_after: f64,
    pub positions_unmasked: Vec<usize>,
    pub confidences: Vec<f64>,
    pub entropies: Vec<f64>,
    /// Sum minus max of the revealed positions' entropies.
    pub budget_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub steps: Vec<StepRecord>,
    pub nfe: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// Canvas up to (excluding) the first EOS.
    pub tokens: Vec<TokenId>,
    /// Full final canvas.
    pub canvas: Vec<TokenId>,
    pub trace: DecodeTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: MaskedSequence,
    /// Revealed positions in selection order.
    pub revealed: Vec<usize>,
}

/// Masked positions ordered by `score` descending, ties to the lower index.
pub fn rank_masked(z: &MaskedSequence, score: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = z.masked_positions().into_iter().map(|p| (p, score(p))).collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(p, _)| p).collect()
}

/// Sum minus max of `entropies`.
pub fn entropy_budget(entropies: &[f64]) -> f64 {
    let sum: f64 = entropies.iter().sum();
    let max = entropies.iter().copied().fold(0.0, f64::max);
    sum - max
}

/// Length of the longest prefix whose entropy budget is at most `gamma`.
/// Always at least 1 for nonempty input.
pub fn entropy_bounded_prefix(entropies: &[f64], gamma: f64) -> usize {
    let (mut sum, mut max) = (0.0, 0.0f64);
    for (i, &h) in entropies.iter().enumerate() {
        sum += h;
        max = max.max(h);
        if i > 0 && sum - max > gamma {
            return i;
        }
    }
    entropies.len()
}

fn choose_token<R: Rng + ?Sized>(grid: &CategoricalGrid, pos: usize, rule: RevealRule, rng: &mut R) -> TokenId {
    match rule {
        RevealRule::Argmax => grid.row_argmax(pos),
        RevealRule::Sample => sample_categorical(grid.row(pos), rng),
    }
}

fn reveal_all<R: Rng + ?Sized>(
    z: &MaskedSequence,
    grid: &CategoricalGrid,
    positions: &[usize],
    rule: RevealRule,
    rng: &mut R,
) -> StepOutcome {
    let mut next = z.clone();
    for &p in positions {
        next.reveal(p, choose_token(grid, p, rule, rng));
    }
    StepOutcome {
        next,
        revealed: positions.to_vec(),
    }
}

/// Reveals `n_reveal` uniformly chosen masked positions (clamped to the
/// number remaining), each sampled from its row.
pub fn step_random<R: Rng + ?Sized>(z: &MaskedSequence, grid: &CategoricalGrid, n_reveal: usize, rng: &mut R) -> StepOutcome {
    let mut pool = z.masked_positions();
    let n = n_reveal.min(pool.len());
    for i in 0..n {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(n);
    reveal_all(z, grid, &pool, RevealRule::Sample, rng)
}

/// Discrete flow-matching step `t -> s`: each masked position moves to
/// `(1 - c) onehot(MASK) + c row` with `c = (alpha_s - alpha_t) / (1 - alpha_t)`
/// and is sampled from it. Returns the mixing vector per masked position.
pub fn step_dfm<R: Rng + ?Sized>(
    z: &MaskedSequence,
    grid: &CategoricalGrid,
    t: f64,
    s: f64,
    rng: &mut R,
) -> Result<(StepOutcome, Vec<(usize, Vec<f64>)>)> {
    let at_t = z.clone().with_time(t)?;
    let (next, mixes) = posterior_step_traced(&at_t, s, grid, NoiseSchedule::Linear, rng)?;
    let revealed = z.masked_positions().into_iter().filter(|&p| !next.is_masked(p)).collect();
    Ok((StepOutcome { next, revealed }, mixes))
}

/// Reveals the `k` most confident masked positions.
pub fn step_conf_top_k<R: Rng + ?Sized>(
    z: &MaskedSequence,
    grid: &CategoricalGrid,
    k: usize,
    rule: RevealRule,
    rng: &mut R,
) -> StepOutcome {
    let order = rank_masked(z, |p| grid.row_confidence(p));
    let n = k.max(1).min(order.len());
    reveal_all(z, grid, &order[..n], rule, rng)
}

fn entropy_bounded<R: Rng + ?Sized>(
    z: &MaskedSequence,
    grid: &CategoricalGrid,
    order: Vec<usize>,
    gamma: f64,
    rule: RevealRule,
    rng: &mut R,
) -> StepOutcome {
    let entropies: Vec<f64> = order.iter().map(|&p| grid.row_entropy(p)).collect();
    let n = entropy_bounded_prefix(&entropies, gamma);
    reveal_all(z, grid, &order[..n], rule, rng)
}

/// Entropy-bounded confidence step: the longest confidence-ranked prefix
/// whose entropy budget is at most `gamma`.
pub fn step_eb_conf<R: Rng + ?Sized>(
    z: &MaskedSequence,
    grid: &CategoricalGrid,
    gamma: f64,
    rule: RevealRule,
    rng: &mut R,
) -> StepOutcome {
    let order = rank_masked(z, |p| grid.row_confidence(p));
    entropy_bounded(z, grid, order, gamma, rule, rng)
}

/// Positional bias `exp(-lambda * i)` on the absolute canvas index.
pub fn positional_score(confidence: f64, pos: usize, lambda: f64) -> f64 {
    (-lambda * pos as f64).exp() * confidence
}

/// As [`step_eb_conf`], ranking by the position-biased confidence.
pub fn step_pbeb_conf<R: Rng + ?Sized>(
    z: &MaskedSequence,
    grid: &CategoricalGrid,
    gamma: f64,
    lambda: f64,
    rule: RevealRule,
    rng: &mut R,
) -> StepOutcome {
    let order = rank_masked(z, |p| positional_score(grid.row_confidence(p), p, lambda));
    entropy_bounded(z, grid, order, gamma, rule, rng)
}

/// Runs one full decode of `config.max_len` positions.
pub fn decode<D: Denoiser + ?Sized>(denoiser: &D, cond: &Condition, config: &SamplerConfig) -> Result<Decoded> {
    config.validate()?;
    let started = Instant::now();
    let vocab = denoiser.vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut z = MaskedSequence::fully_masked(config.max_len, vocab);
    let mut steps = Vec::new();
    let mut nfe = 0;

    while z.masked_count() > 0 {
        let t = config.time_at(nfe);
        let s = config.time_at(nfe + 1);
        z = z.with_time(t)?;
        let grid = denoiser
            .predict(&z, cond)
            .map_err(|e| Error::Decode(format!("denoiser evaluation {}: {e}", nfe + 1)))?;
        if grid.len() != z.len() {
            return Err(Error::Decode(format!(
                "denoiser returned {} rows for a canvas of {}",
                grid.len(),
                z.len()
            )));
        }
        nfe += 1;

        let mut outcome = match config.kind {
            SamplerKind::Random => {
                let remaining_steps = config.max_nfe - nfe + 1;
                let n = z.masked_count().div_ceil(remaining_steps);
                step_random(&z, &grid, n, &mut rng)
            }
            SamplerKind::Dfm => step_dfm(&z, &grid, t, s, &mut rng)?.0,
            SamplerKind::ConfTopK => step_conf_top_k(&z, &grid, config.k, config.reveal, &mut rng),
            SamplerKind::EbConf => step_eb_conf(&z, &grid, config.gamma, config.reveal, &mut rng),
            SamplerKind::PbebConf => step_pbeb_conf(&z, &grid, config.gamma, config.lambda, config.reveal, &mut rng),
        };
        if nfe == config.max_nfe {
            for p in outcome.next.masked_positions() {
                outcome.next.reveal(p, grid.row_argmax(p));
                outcome.revealed.push(p);
            }
        }

        let confidences: Vec<f64> = outcome.revealed.iter().map(|&p| grid.row_confidence(p)).collect();
        let entropies: Vec<f64> = outcome.revealed.iter().map(|&p| grid.row_entropy(p)).collect();
        steps.push(StepRecord {
            t_before: t,
            t_after: s,
            budget_used: entropy_budget(&entropies),
            positions_unmasked: outcome.revealed,
            confidences,
            entropies,
        });
        z = outcome.next.with_time(s)?;
    }

    let canvas = z.ids().to_vec();
    let eos = vocab.eos_id();
    let end = canvas.iter().position(|&t| t == eos).unwrap_or(canvas.len());
    Ok(Decoded {
        tokens: canvas[..end].to_vec(),
        canvas,
        trace: DecodeTrace {
            steps,
            nfe,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Vocabulary;

    // w0, w1, w2, EOS, MASK
    fn vocab() -> Vocabulary {
        Vocabulary::synthetic(3).unwrap()
    }

    fn grid_from(rows: Vec<Vec<f64>>) -> CategoricalGrid {
        CategoricalGrid::new(rows, &vocab()).unwrap()
    }

    fn row_with_conf(c: f64) -> Vec<f64> {
        let rest = (1.0 - c) / 3.0;
        vec![c, rest, rest, rest, 0.0]
    }

    #[test]
    fn top_k_hand_ranking() {
        let v = vocab();
        let z = MaskedSequence::fully_masked(8, &v);
        let mut rows = vec![row_with_conf(0.3); 8];
        rows[2] = row_with_conf(0.9);
        rows[5] = row_with_conf(0.6);
        rows[7] = row_with_conf(0.8);
        let mut ids = vec![0; 8];
        for p in [2, 5, 7] {
            ids[p] = v.mask_id();
        }
        for (p, row) in rows.iter_mut().enumerate() {
            if ids[p] != v.mask_id() {
                *row = vec![1.0, 0.0, 0.0, 0.0, 0.0];
            }
        }
        let z = MaskedSequence::new(ids, z.time(), &v).unwrap();
        let grid = grid_from(rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step_conf_top_k(&z, &grid, 2, RevealRule::Argmax, &mut rng);
        assert_eq!(out.revealed, vec![2, 7]);
        let all = step_conf_top_k(&z, &grid, 10, RevealRule::Argmax, &mut rng);
        assert_eq!(all.next.masked_count(), 0);
    }

    #[test]
    fn top_k_ties_go_to_lowest_index() {
        let v = vocab();
        let z = MaskedSequence::fully_masked(4, &v);
        let grid = grid_from(vec![row_with_conf(0.5); 4]);
        let out = step_conf_top_k(&z, &grid, 1, RevealRule::Argmax, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out.revealed, vec![0]);
    }

    #[test]
    fn eb_prefix_examples() {
        assert_eq!(entropy_bounded_prefix(&[0.01, 0.02, 0.5], 0.05), 3);
        assert_eq!(entropy_bounded_prefix(&[0.3, 0.3, 0.3], 0.05), 1);
        assert_eq!(entropy_bounded_prefix(&[0.7], 0.0), 1);
        assert_eq!(entropy_bounded_prefix(&[0.1, 0.2, 0.3], 0.0), 1);
        assert_eq!(entropy_bounded_prefix(&[0.1, 0.2, 0.3], 1e9), 3);
    }

    #[test]
    fn pbeb_reorders_by_position() {
        assert!((positional_score(0.9, 4, 0.2) - 0.9 * (-0.8f64).exp()).abs() < 1e-15);
        assert!((positional_score(0.9, 4, 0.2) - 0.4044).abs() < 1e-4);
        let v = vocab();
        let mut ids = vec![1; 5];
        ids[0] = v.mask_id();
        ids[4] = v.mask_id();
        let z = MaskedSequence::new(ids, 1.0, &v).unwrap();
        let mut rows = vec![vec![0.0, 1.0, 0.0, 0.0, 0.0]; 5];
        rows[0] = row_with_conf(0.8);
        rows[4] = row_with_conf(0.9);
        let grid = grid_from(rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eb = step_eb_conf(&z, &grid, 0.0, RevealRule::Argmax, &mut rng);
        assert_eq!(eb.revealed, vec![4]);
        let pb = step_pbeb_conf(&z, &grid, 0.0, 0.2, RevealRule::Argmax, &mut rng);
        assert_eq!(pb.revealed, vec![0]);
        let pb0 = step_pbeb_conf(&z, &grid, 0.0, 0.0, RevealRule::Argmax, &mut rng);
        assert_eq!(pb0, eb);
    }

    #[test]
    fn dfm_hand_mixing() {
        // two content tokens: w0, w1, EOS, MASK
        let v = Vocabulary::synthetic(2).unwrap();
        let z = MaskedSequence::fully_masked(1, &v);
        let grid = CategoricalGrid::new(vec![vec![0.7, 0.3, 0.0, 0.0]], &v).unwrap();
        let (_, mixes) = step_dfm(&z, &grid, 1.0, 0.75, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mix = &mixes[0].1;
        assert!((mix[0] - 0.175).abs() < 1e-15);
        assert!((mix[1] - 0.075).abs() < 1e-15);
        assert!((mix[v.mask_id()] - 0.75).abs() < 1e-15);
        let (out, _) = step_dfm(&z, &grid, 0.5, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.next.masked_count(), 0);
        assert!(step_dfm(&z, &grid, 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn dfm_one_hot_rows_always_reveal_that_token() {
        let v = vocab();
        let mut z = MaskedSequence::fully_masked(3, &v);
        let grid = grid_from(vec![vec![0.0, 0.0, 1.0, 0.0, 0.0]; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ts = [1.0, 0.75, 0.5, 0.25, 0.0];
        for w in ts.windows(2) {
            z = step_dfm(&z, &grid, w[0], w[1], &mut rng).unwrap().0.next;
            for p in 0..3 {
                assert!(z.is_masked(p) || z.ids()[p] == 2);
            }
        }
        assert_eq!(z.masked_count(), 0);
    }

    #[test]
    fn random_step_edge_cases() {
        let v = vocab();
        let grid = grid_from(vec![row_with_conf(0.4); 3]);
        let z = MaskedSequence::new(vec![0, v.mask_id(), 1], 0.5, &v).unwrap();
        let out = step_random(&z, &grid, 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out.revealed, vec![1]);
        let z = MaskedSequence::fully_masked(3, &v);
        let out = step_random(&z, &grid, 3, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out.next.masked_count(), 0);
        let a = step_random(&z, &grid, 2, &mut ChaCha8Rng::seed_from_u64(9));
        let b = step_random(&z, &grid, 2, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation_and_names() {
        assert!(SamplerConfig { max_nfe: 0, ..SamplerConfig::default() }.validate().is_err());
        assert!(SamplerConfig { kind: SamplerKind::ConfTopK, k: 0, ..SamplerConfig::default() }.validate().is_err());
        for kind in SamplerKind::ALL {
            assert_eq!(kind.name().parse::<SamplerKind>().unwrap(), kind);
        }
        assert_eq!("top_k".parse::<SamplerKind>().unwrap(), SamplerKind::ConfTopK);
        assert!("beam".parse::<SamplerKind>().is_err());
    }
}
