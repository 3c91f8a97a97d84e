//! Synthetic conditional-transcription tasks with enumerable ground-truth
//! posteriors.
//!
//! Each target token is transmitted as a block of `frames_per_token` frames.
//! A block carries the one-hot code of the transmitted symbol in its first
//! `content_vocab_size` features plus bounded uniform jitter. With probability
//! `channel_noise` the transmitted symbol is replaced by a uniformly chosen
//! wrong one. The jitter is bounded below one half, so the transmitted symbol
//! can always be read back from the frames and the posterior `p(x | a)` equals
//! `p(x | transmitted symbols)`.

mod dataset;
mod hmm;

pub use dataset::{read_dataset, read_jsonl, write_jsonl, write_splits, DatasetManifest, SplitInfo};
pub use hmm::HmmModel;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CategoricalGrid, Condition, MaskedSequence, TokenId, TokenSequence, Vocabulary};

/// Seconds of pseudo-audio per frame.
pub const SECONDS_PER_FRAME: f64 = 0.02;

/// Longest target a task may generate.
pub const TASK_MAX_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Independent uniform tokens through a symmetric channel.
    NoisyChannel,
    /// Tokens follow a cyclic Markov chain; emissions use the same channel.
    HmmEmission,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy_channel" => Ok(Self::NoisyChannel),
            "hmm_emission" => Ok(Self::HmmEmission),
            other => Err(Error::Config(format!("unknown task kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NoisyChannel => "noisy_channel",
            Self::HmmEmission => "hmm_emission",
        })
    }
}

fn default_strength() -> f64 {
    0.8
}

fn default_jitter() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub content_vocab_size: usize,
    pub length_range: (usize, usize),
    pub channel_noise: f64,
    pub frames_per_token: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// Successor probability of the cyclic chain (HMM kind only).
    #[serde(default = "default_strength")]
    pub transition_strength: f64,
    /// Half-width of the uniform feature jitter.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, content_vocab_size: usize, length_range: (usize, usize), channel_noise: f64) -> Self {
        Self {
            kind,
            content_vocab_size,
            length_range,
            channel_noise,
            frames_per_token: 2,
            feature_dim: content_vocab_size,
            seed: 0,
            transition_strength: default_strength(),
            jitter: default_jitter(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.content_vocab_size < 2 {
            return bad("content_vocab_size must be at least 2".into());
        }
        let (lo, hi) = self.length_range;
        if lo == 0 || lo > hi || hi > TASK_MAX_LEN {
            return bad(format!("length range ({lo}, {hi}) must satisfy 1 <= min <= max <= {TASK_MAX_LEN}"));
        }
        if !(0.0..1.0).contains(&self.channel_noise) {
            return bad(format!("channel_noise {} outside [0, 1)", self.channel_noise));
        }
        if self.frames_per_token == 0 {
            return bad("frames_per_token must be positive".into());
        }
        if self.feature_dim < self.content_vocab_size {
            return bad("feature_dim must be at least content_vocab_size".into());
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return bad("jitter must lie in [0, 0.5)".into());
        }
        if !(0.0..=1.0).contains(&self.transition_strength) {
            return bad("transition_strength must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn vocab(&self) -> Vocabulary {
        Vocabulary::synthetic(self.content_vocab_size).expect("content_vocab_size >= 1")
    }

    pub fn hmm(&self) -> HmmModel {
        let strength = match self.kind {
            TaskKind::NoisyChannel => 0.0,
            TaskKind::HmmEmission => self.transition_strength,
        };
        HmmModel::cyclic(self.content_vocab_size, strength)
    }

    /// `P(transmitted = y | true = x)`.
    pub fn emission(&self, x: usize, y: usize) -> f64 {
        if x == y {
            1.0 - self.channel_noise
        } else {
            self.channel_noise / (self.content_vocab_size - 1) as f64
        }
    }

    /// Number of target tokens implied by the frame count.
    pub fn content_length(&self, cond: &Condition) -> Result<usize> {
        let t = cond.num_frames();
        if t % self.frames_per_token != 0 {
            return Err(Error::Dimension(format!(
                "{t} frames is not a multiple of frames_per_token = {}",
                self.frames_per_token
            )));
        }
        if cond.dim() != self.feature_dim {
            return Err(Error::Dimension(format!(
                "condition has {} features, task expects {}",
                cond.dim(),
                self.feature_dim
            )));
        }
        Ok(t / self.frames_per_token)
    }

    /// Transmitted symbol per token block, read from the summed features.
    pub fn observed_symbols(&self, cond: &Condition) -> Result<Vec<usize>> {
        let n = self.content_length(cond)?;
        let m = self.content_vocab_size;
        Ok((0..n)
            .map(|l| {
                let mut sums = vec![0.0; m];
                for frame in &cond.frames()[l * self.frames_per_token..(l + 1) * self.frames_per_token] {
                    for (s, v) in sums.iter_mut().zip(frame) {
                        *s += v;
                    }
                }
                crate::types::argmax(&sums)
            })
            .collect())
    }

    /// Channel likelihood vectors `P(y_l | x_l = s)` per content position.
    fn likelihoods(&self, cond: &Condition) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .observed_symbols(cond)?
            .into_iter()
            .map(|y| (0..self.content_vocab_size).map(|x| self.emission(x, y)).collect())
            .collect())
    }

    pub fn generate(&self, n: usize) -> Result<Vec<Example>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let vocab = self.vocab();
        let hmm = self.hmm();
        (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(i as u64);
                self.generate_one(&mut rng, &hmm, &vocab)
            })
            .collect()
    }

    fn generate_one(&self, rng: &mut ChaCha8Rng, hmm: &HmmModel, vocab: &Vocabulary) -> Result<Example> {
        let m = self.content_vocab_size;
        let (lo, hi) = self.length_range;
        let len = rng.gen_range(lo..=hi);

        let mut target = Vec::with_capacity(len);
        for l in 0..len {
            let dist = if l == 0 { &hmm.initial } else { &hmm.transition[target[l - 1]] };
            target.push(crate::types::sample_categorical(dist, rng));
        }

        let mut frames = Vec::with_capacity(len * self.frames_per_token);
        let mut noise_draws = Vec::with_capacity(len);
        let mut observed = Vec::with_capacity(len);
        for &x in &target {
            let flipped = rng.gen::<f64>() < self.channel_noise;
            let y = if flipped {
                let k = rng.gen_range(0..m - 1);
                if k >= x { k + 1 } else { k }
            } else {
                x
            };
            noise_draws.push(flipped);
            observed.push(y);
            for _ in 0..self.frames_per_token {
                let frame: Vec<f64> = (0..self.feature_dim)
                    .map(|d| {
                        let base = if d == y { 1.0 } else { 0.0 };
                        base + self.jitter * (2.0 * rng.gen::<f64>() - 1.0)
                    })
                    .collect();
                frames.push(frame);
            }
        }
        let duration = (len * self.frames_per_token) as f64 * SECONDS_PER_FRAME;
        Ok(Example {
            cond: Condition::new(frames, duration)?,
            target: TokenSequence::new(target, vocab)?,
            meta: ExampleMeta {
                true_length: len,
                noise_draws,
                observed,
            },
        })
    }

    /// Exact per-position posterior of the canvas `observed` given `cond`.
    /// Closed form for the factorized channel, forward-backward for the HMM.
    /// Canvas positions at or past the content length are EOS with certainty.
    pub fn exact_posterior(&self, cond: &Condition, observed: &MaskedSequence) -> Result<CategoricalGrid> {
        let vocab = self.vocab();
        let n = self.content_length(cond)?;
        let m = self.content_vocab_size;
        let canvas = observed.len();
        let mut lik = self.likelihoods(cond)?;
        check_revealed_tail(observed, n, &vocab)?;
        for (l, row) in lik.iter_mut().enumerate().take(canvas.min(n)) {
            if !observed.is_masked(l) {
                let tok = observed.ids()[l];
                for (s, v) in row.iter_mut().enumerate() {
                    if s != tok {
                        *v = 0.0;
                    }
                }
                if tok >= m {
                    return Err(Error::InconsistentEvidence);
                }
            }
        }

        let marginals = match self.kind {
            TaskKind::NoisyChannel => lik
                .iter()
                .map(|row| {
                    let s: f64 = row.iter().sum();
                    if !(s > 0.0) {
                        return Err(Error::InconsistentEvidence);
                    }
                    Ok(row.iter().map(|v| v / s).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()?,
            TaskKind::HmmEmission => self.hmm().posterior_marginals(&lik)?,
        };

        let mut rows = Vec::with_capacity(canvas);
        for l in 0..canvas {
            let mut row = vec![0.0; vocab.size()];
            if !observed.is_masked(l) {
                row[observed.ids()[l]] = 1.0;
            } else if l < n {
                row[..m].copy_from_slice(&marginals[l]);
            } else {
                row[vocab.eos_id()] = 1.0;
            }
            rows.push(row);
        }
        CategoricalGrid::new(rows, &vocab)
    }
}

fn check_revealed_tail(observed: &MaskedSequence, n: usize, vocab: &Vocabulary) -> Result<()> {
    for l in n..observed.len() {
        if !observed.is_masked(l) && observed.ids()[l] != vocab.eos_id() {
            return Err(Error::InconsistentEvidence);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub true_length: usize,
    /// Whether each token block was replaced by a wrong symbol.
    pub noise_draws: Vec<bool>,
    /// Transmitted symbol per block.
    pub observed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub cond: Condition,
    pub target: TokenSequence,
    pub meta: ExampleMeta,
}

/// Joint distribution `p(canvas | cond)` that can be enumerated position by
/// position.
pub trait SequenceJoint: Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Tokens with nonzero probability at each canvas position.
    fn support(&self, cond: &Condition, canvas_len: usize) -> Result<Vec<Vec<TokenId>>>;

    /// Unnormalized probability of a full canvas.
    fn weight(&self, cond: &Condition, canvas: &[TokenId]) -> Result<f64>;
}

/// A task together with its vocabulary, usable as a [`SequenceJoint`].
#[derive(Debug, Clone)]
pub struct TaskJoint {
    spec: TaskSpec,
    vocab: Vocabulary,
}

impl TaskJoint {
    pub fn new(spec: TaskSpec) -> Result<Self> {
        spec.validate()?;
        let vocab = spec.vocab();
        Ok(Self { spec, vocab })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }
}

impl SequenceJoint for TaskJoint {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn support(&self, cond: &Condition, canvas_len: usize) -> Result<Vec<Vec<TokenId>>> {
        let n = self.spec.content_length(cond)?;
        let content = self.vocab.content_ids();
        Ok((0..canvas_len)
            .map(|l| if l < n { content.clone() } else { vec![self.vocab.eos_id()] })
            .collect())
    }

    fn weight(&self, cond: &Condition, canvas: &[TokenId]) -> Result<f64> {
        let n = self.spec.content_length(cond)?;
        let lik = self.spec.likelihoods(cond)?;
        let m = self.spec.content_vocab_size;
        let k = canvas.len().min(n);
        if canvas[k..].iter().any(|&t| t != self.vocab.eos_id()) || canvas[..k].iter().any(|&t| t >= m) {
            return Ok(0.0);
        }
        Ok(self.spec.hmm().prefix_weight(&canvas[..k], &lik))
    }
}

/// Explicit table of canvas sequences and probabilities; ignores the
/// condition.
#[derive(Debug, Clone)]
pub struct TableJoint {
    vocab: Vocabulary,
    table: Vec<(Vec<TokenId>, f64)>,
}

impl TableJoint {
    pub fn new(vocab: Vocabulary, table: Vec<(Vec<TokenId>, f64)>) -> Result<Self> {
        let Some(len) = table.first().map(|(s, _)| s.len()) else {
            return Err(Error::Config("empty joint table".into()));
        };
        if table.iter().any(|(s, p)| s.len() != len || *p < 0.0) {
            return Err(Error::Config("table rows must share a length and be nonnegative".into()));
        }
        Ok(Self { vocab, table })
    }

    pub fn entries(&self) -> &[(Vec<TokenId>, f64)] {
        &self.table
    }
}

impl SequenceJoint for TableJoint {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn support(&self, _cond: &Condition, canvas_len: usize) -> Result<Vec<Vec<TokenId>>> {
        if canvas_len != self.table[0].0.len() {
            return Err(Error::Dimension("canvas length differs from table length".into()));
        }
        Ok((0..canvas_len)
            .map(|l| {
                let mut toks: Vec<TokenId> = self.table.iter().map(|(s, _)| s[l]).collect();
                toks.sort_unstable();
                toks.dedup();
                toks
            })
            .collect())
    }

    fn weight(&self, _cond: &Condition, canvas: &[TokenId]) -> Result<f64> {
        Ok(self
            .table
            .iter()
            .filter(|(s, _)| s.as_slice() == canvas)
            .map(|(_, p)| p)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn masked(len: usize, revealed: &[(usize, TokenId)], vocab: &Vocabulary) -> MaskedSequence {
        let mut ids = vec![vocab.mask_id(); len];
        for &(p, t) in revealed {
            ids[p] = t;
        }
        MaskedSequence::new(ids, 0.5, vocab).unwrap()
    }

    #[test]
    fn noise_free_posterior_is_one_hot() {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 4, (3, 5), 0.0).with_seed(3);
        for ex in spec.generate(20).unwrap() {
            let vocab = spec.vocab();
            let z = MaskedSequence::fully_masked(ex.target.len(), &vocab);
            let grid = spec.exact_posterior(&ex.cond, &z).unwrap();
            for (l, &tok) in ex.target.ids().iter().enumerate() {
                assert_eq!(grid.row(l)[tok], 1.0);
            }
        }
    }

    #[test]
    fn symmetric_channel_posterior() {
        let p = 0.3;
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 5, (4, 4), p).with_seed(9);
        let ex = &spec.generate(1).unwrap()[0];
        let vocab = spec.vocab();
        let grid = spec.exact_posterior(&ex.cond, &masked(4, &[], &vocab)).unwrap();
        for l in 0..4 {
            let y = ex.meta.observed[l];
            for s in 0..5 {
                let want = if s == y { 1.0 - p } else { p / 4.0 };
                assert!((grid.row(l)[s] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn near_uninformative_channel_is_near_uniform() {
        let m = 20;
        let spec = TaskSpec::new(TaskKind::NoisyChannel, m, (2, 2), 1.0 - 1.0 / m as f64 - 1e-9);
        let ex = &spec.generate(1).unwrap()[0];
        let vocab = spec.vocab();
        let grid = spec.exact_posterior(&ex.cond, &masked(2, &[], &vocab)).unwrap();
        for s in 0..m {
            assert!((grid.row(0)[s] - 1.0 / m as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn channel_corruption_rate() {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 4, (3, 3), 0.2).with_seed(17);
        let data = spec.generate(10_000).unwrap();
        let mut flips = 0usize;
        let mut total = 0usize;
        for ex in &data {
            for (l, &tok) in ex.target.ids().iter().enumerate() {
                flips += usize::from(ex.meta.observed[l] != tok);
                assert_eq!(ex.meta.noise_draws[l], ex.meta.observed[l] != tok);
                total += 1;
            }
            assert_eq!(spec.observed_symbols(&ex.cond).unwrap(), ex.meta.observed);
        }
        let rate = flips as f64 / total as f64;
        assert!((rate - 0.2).abs() <= 0.012, "rate {rate}");
    }

    #[test]
    fn examples_respect_invariants() {
        let mut spec = TaskSpec::new(TaskKind::HmmEmission, 3, (2, 6), 0.1).with_seed(1);
        spec.frames_per_token = 3;
        spec.feature_dim = 5;
        for ex in spec.generate(50).unwrap() {
            let n = ex.target.len();
            assert!((2..=6).contains(&n));
            assert_eq!(ex.cond.num_frames(), 3 * n);
            assert_eq!(ex.cond.dim(), 5);
            assert!((ex.cond.duration_s() - 3.0 * n as f64 * SECONDS_PER_FRAME).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 4, (2, 8), 0.25).with_seed(5);
        assert_eq!(spec.generate(30).unwrap(), spec.generate(30).unwrap());
        let other = TaskSpec { seed: 6, ..spec.clone() };
        assert_ne!(spec.generate(30).unwrap(), other.generate(30).unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = TaskSpec::new(TaskKind::NoisyChannel, 4, (1, 4), 0.1);
        assert!(TaskSpec { content_vocab_size: 1, ..base.clone() }.validate().is_err());
        assert!(TaskSpec { length_range: (3, 2), ..base.clone() }.validate().is_err());
        assert!(TaskSpec { channel_noise: 1.0, ..base.clone() }.validate().is_err());
        assert!(TaskSpec { feature_dim: 2, ..base.clone() }.validate().is_err());
        assert!(base.generate(0).is_err());
    }

    #[test]
    fn hmm_with_independent_rows_reduces_to_channel() {
        let chan = TaskSpec::new(TaskKind::NoisyChannel, 4, (5, 5), 0.3).with_seed(2);
        let hmm = TaskSpec {
            kind: TaskKind::HmmEmission,
            transition_strength: 0.0,
            ..chan.clone()
        };
        let ex = &chan.generate(1).unwrap()[0];
        let vocab = chan.vocab();
        let z = masked(5, &[(1, 2)], &vocab);
        let a = chan.exact_posterior(&ex.cond, &z).unwrap();
        let b = hmm.exact_posterior(&ex.cond, &z).unwrap();
        for l in 0..5 {
            for s in 0..vocab.size() {
                assert!((a.row(l)[s] - b.row(l)[s]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_transition_single_token_matches_channel() {
        let chan = TaskSpec::new(TaskKind::NoisyChannel, 3, (1, 1), 0.25);
        let ex = &chan.generate(1).unwrap()[0];
        let y = ex.meta.observed[0];
        let hmm = HmmModel::new(vec![1.0 / 3.0; 3], (0..3).map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect()).collect()).unwrap();
        let lik: Vec<Vec<f64>> = vec![(0..3).map(|x| chan.emission(x, y)).collect()];
        let post = hmm.posterior_marginals(&lik).unwrap();
        let vocab = chan.vocab();
        let grid = chan.exact_posterior(&ex.cond, &masked(1, &[], &vocab)).unwrap();
        for s in 0..3 {
            assert!((post[0][s] - grid.row(0)[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn canvas_tail_is_eos_and_inconsistent_tail_rejected() {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 3, (2, 2), 0.2);
        let ex = &spec.generate(1).unwrap()[0];
        let vocab = spec.vocab();
        let grid = spec.exact_posterior(&ex.cond, &masked(4, &[], &vocab)).unwrap();
        assert_eq!(grid.row(2)[vocab.eos_id()], 1.0);
        assert_eq!(grid.row(3)[vocab.eos_id()], 1.0);
        assert!(spec.exact_posterior(&ex.cond, &masked(4, &[(3, 0)], &vocab)).is_err());
        assert!(spec.exact_posterior(&ex.cond, &masked(4, &[(0, vocab.eos_id())], &vocab)).is_err());
    }
}
