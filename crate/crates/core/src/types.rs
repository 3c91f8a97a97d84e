//! Vocabulary, clean and masked sequences, per-position categorical grids and
//! the conditioning signal.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`].
pub type TokenId = usize;

/// Absolute tolerance used for every simplex check.
pub const SIMPLEX_TOL: f64 = 1e-9;

pub const MASK_TOKEN: &str = "<MASK>";
pub const EOS_TOKEN: &str = "<EOS>";

/// Token inventory. MASK and EOS are ordinary entries of `tokens` and count
/// towards [`Vocabulary::size`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyJson", into = "VocabularyJson")]
pub struct Vocabulary {
    tokens: Vec<String>,
    mask_id: TokenId,
    eos_id: TokenId,
}

#[derive(Serialize, Deserialize)]
struct VocabularyJson {
    tokens: Vec<String>,
    mask: String,
    eos: String,
}

impl TryFrom<VocabularyJson> for Vocabulary {
    type Error = Error;

    fn try_from(raw: VocabularyJson) -> Result<Self> {
        if raw.mask != MASK_TOKEN || raw.eos != EOS_TOKEN {
            return Err(Error::Vocabulary(format!(
                "reserved tokens must be {MASK_TOKEN:?} and {EOS_TOKEN:?}"
            )));
        }
        Vocabulary::new(raw.tokens)
    }
}

impl From<Vocabulary> for VocabularyJson {
    fn from(v: Vocabulary) -> Self {
        VocabularyJson {
            tokens: v.tokens,
            mask: MASK_TOKEN.to_string(),
            eos: EOS_TOKEN.to_string(),
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary from a token list that contains `<MASK>` and
    /// `<EOS>` exactly once each.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if !seen.insert(t.as_str()) {
                return Err(Error::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        let find = |name: &str| {
            tokens
                .iter()
                .position(|t| t == name)
                .ok_or_else(|| Error::Vocabulary(format!("missing reserved token {name}")))
        };
        let mask_id = find(MASK_TOKEN)?;
        let eos_id = find(EOS_TOKEN)?;
        if tokens.len() < 3 {
            return Err(Error::Vocabulary(
                "need at least one content token besides MASK and EOS".into(),
            ));
        }
        Ok(Self {
            tokens,
            mask_id,
            eos_id,
        })
    }

    /// `content` symbols `w0..w{content-1}`, then EOS, then MASK.
    pub fn synthetic(content: usize) -> Result<Self> {
        let mut tokens: Vec<String> = (0..content).map(|i| format!("w{i}")).collect();
        tokens.push(EOS_TOKEN.to_string());
        tokens.push(MASK_TOKEN.to_string());
        Self::new(tokens)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Result<TokenId> {
        self.tokens
            .iter()
            .position(|t| t == token)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    /// Ids other than MASK and EOS, in index order.
    pub fn content_ids(&self) -> Vec<TokenId> {
        (0..self.size())
            .filter(|&i| i != self.mask_id && i != self.eos_id)
            .collect()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<TokenId>> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    /// Hex SHA-256 of the JSON form; checkpoints use it to pin their vocabulary.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("vocabulary serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// A clean sequence: no MASK entries, at least one position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence(Vec<TokenId>);

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>, vocab: &Vocabulary) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Sequence("clean sequence must be nonempty".into()));
        }
        if let Some(&bad) = ids
            .iter()
            .find(|&&i| i >= vocab.size() || i == vocab.mask_id())
        {
            return Err(Error::Sequence(format!(
                "token id {bad} is MASK or outside the vocabulary"
            )));
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Right-pads with EOS up to `len` (no-op when already that long).
    pub fn padded(&self, len: usize, vocab: &Vocabulary) -> TokenSequence {
        let mut ids = self.0.clone();
        while ids.len() < len {
            ids.push(vocab.eos_id());
        }
        TokenSequence(ids)
    }
}

/// The latent `z_t`: token-or-MASK per position plus the diffusion time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSequence {
    ids: Vec<TokenId>,
    time: f64,
    mask_id: TokenId,
}

impl MaskedSequence {
    pub fn new(ids: Vec<TokenId>, time: f64, vocab: &Vocabulary) -> Result<Self> {
        check_time(time)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab.size()) {
            return Err(Error::Sequence(format!("token id {bad} outside vocabulary")));
        }
        Ok(Self {
            ids,
            time,
            mask_id: vocab.mask_id(),
        })
    }

    /// All-MASK canvas at `t = 1`.
    pub fn fully_masked(len: usize, vocab: &Vocabulary) -> Self {
        Self {
            ids: vec![vocab.mask_id(); len],
            time: 1.0,
            mask_id: vocab.mask_id(),
        }
    }

    pub fn from_clean(x: &TokenSequence, vocab: &Vocabulary) -> Self {
        Self {
            ids: x.ids().to_vec(),
            time: 0.0,
            mask_id: vocab.mask_id(),
        }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        self.ids[pos] == self.mask_id
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.is_masked(i)).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.ids.iter().filter(|&&i| i == self.mask_id).count()
    }

    pub fn with_time(mut self, time: f64) -> Result<Self> {
        check_time(time)?;
        self.time = time;
        Ok(self)
    }

    /// Replaces the MASK at `pos` with `token`.
    pub(crate) fn reveal(&mut self, pos: usize, token: TokenId) {
        debug_assert!(self.is_masked(pos), "position {pos} already revealed");
        debug_assert_ne!(token, self.mask_id);
        self.ids[pos] = token;
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Time(format!("{t} outside [0, 1]")));
    }
    Ok(())
}

/// Per-position probability vectors over the whole vocabulary, with zero mass
/// on MASK in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalGrid {
    width: usize,
    probs: Vec<f64>,
}

impl CategoricalGrid {
    pub fn new(rows: Vec<Vec<f64>>, vocab: &Vocabulary) -> Result<Self> {
        let width = vocab.size();
        let mut probs = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, vocabulary has {width}",
                    row.len()
                )));
            }
            probs.extend_from_slice(row);
        }
        Self::from_flat(probs, vocab)
    }

    pub fn from_flat(probs: Vec<f64>, vocab: &Vocabulary) -> Result<Self> {
        let width = vocab.size();
        if probs.len() % width != 0 {
            return Err(Error::Dimension("flat grid not a multiple of |V|".into()));
        }
        for (i, row) in probs.chunks(width).enumerate() {
            check_simplex(row).map_err(|reason| Error::NotSimplex { row: i, reason })?;
            if row[vocab.mask_id()] != 0.0 {
                return Err(Error::NotSimplex {
                    row: i,
                    reason: format!("mass {} on MASK", row[vocab.mask_id()]),
                });
            }
        }
        Ok(Self { width, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, pos: usize) -> &[f64] {
        &self.probs[pos * self.width..(pos + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.width)
    }

    pub fn row_entropy(&self, pos: usize) -> f64 {
        entropy_of(self.row(pos))
    }

    pub fn row_confidence(&self, pos: usize) -> f64 {
        confidence_of(self.row(pos))
    }

    pub fn row_argmax(&self, pos: usize) -> TokenId {
        argmax(self.row(pos))
    }
}

/// Returns `Err(reason)` when `row` is off the simplex by more than
/// [`SIMPLEX_TOL`].
pub fn check_simplex(row: &[f64]) -> std::result::Result<(), String> {
    if row.is_empty() {
        return Err("empty row".into());
    }
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < -SIMPLEX_TOL {
            return Err(format!("entry {p} is negative or non-finite"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// Shannon entropy in nats, `0 ln 0 = 0`.
pub fn entropy(row: &[f64]) -> Result<f64> {
    check_simplex(row).map_err(|reason| Error::NotSimplex { row: 0, reason })?;
    Ok(entropy_of(row))
}

/// Maximum entry of the row.
pub fn confidence(row: &[f64]) -> Result<f64> {
    check_simplex(row).map_err(|reason| Error::NotSimplex { row: 0, reason })?;
    Ok(confidence_of(row))
}

pub(crate) fn entropy_of(row: &[f64]) -> f64 {
    let h: f64 = row
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

pub(crate) fn confidence_of(row: &[f64]) -> f64 {
    row.iter().copied().fold(0.0, f64::max)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw using exactly one uniform from `rng`.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_nonzero = i;
            if target < acc {
                return i;
            }
        }
    }
    last_nonzero
}

/// The conditioning signal: `T` frames of `D` features plus a pseudo-duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    frames: Vec<Vec<f64>>,
    duration_s: f64,
}

impl Condition {
    pub fn new(frames: Vec<Vec<f64>>, duration_s: f64) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Dimension("condition needs at least one frame".into()));
        };
        let dim = first.len();
        if dim == 0 || frames.iter().any(|f| f.len() != dim) {
            return Err(Error::Dimension("condition frames must share a nonzero dimension".into()));
        }
        if !(duration_s > 0.0) {
            return Err(Error::Dimension(format!("duration {duration_s} must be positive")));
        }
        Ok(Self { frames, duration_s })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }
}
