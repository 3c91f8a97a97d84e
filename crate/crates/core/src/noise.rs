//! Absorbing-state forward corruption and its closed-form reverse posterior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{sample_categorical, CategoricalGrid, MaskedSequence, TokenSequence, Vocabulary};

/// Survival probability `alpha(t)` of an unmasked token at diffusion time `t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSchedule {
    /// `alpha(t) = 1 - t`.
    #[default]
    Linear,
}

impl NoiseSchedule {
    pub fn alpha(&self, t: f64) -> f64 {
        match self {
            NoiseSchedule::Linear => 1.0 - t,
        }
    }

    /// `d alpha / dt`.
    pub fn alpha_prime(&self, _t: f64) -> f64 {
        match self {
            NoiseSchedule::Linear => -1.0,
        }
    }

    /// Positive per-token weight `-alpha'(t) / (1 - alpha(t))` of the
    /// denoising cross-entropy; `1/t` for the linear schedule.
    pub fn loss_weight(&self, t: f64) -> f64 {
        -self.alpha_prime(t) / (1.0 - self.alpha(t))
    }

    /// Probability that a position masked at time `t` is revealed by time `s`.
    pub fn unmask_probability(&self, t: f64, s: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Time(format!("t = {t} must lie in (0, 1]")));
        }
        if !(s >= 0.0 && s < t) {
            return Err(Error::Time(format!("s = {s} must lie in [0, t = {t})")));
        }
        let (a_s, a_t) = (self.alpha(s), self.alpha(t));
        Ok(((a_s - a_t) / (1.0 - a_t)).clamp(0.0, 1.0))
    }
}

/// Forward process: every position independently survives with probability
/// `alpha(t)`. One uniform is drawn per position in index order.
pub fn corrupt<R: Rng + ?Sized>(
    x: &TokenSequence,
    t: f64,
    schedule: NoiseSchedule,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<MaskedSequence> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Time(format!("corruption time {t} outside [0, 1]")));
    }
    let keep = schedule.alpha(t);
    let ids = x
        .ids()
        .iter()
        .map(|&tok| {
            let u: f64 = rng.gen();
            if u < keep {
                tok
            } else {
                vocab.mask_id()
            }
        })
        .collect();
    MaskedSequence::new(ids, t, vocab)
}

/// `(alpha_s - alpha_t) / (1 - alpha_t)` under the linear schedule.
pub fn posterior_unmask_probability(t: f64, s: f64) -> Result<f64> {
    NoiseSchedule::Linear.unmask_probability(t, s)
}

/// Next-state distribution of one masked position: `(1-c)` on MASK and
/// `c * row` elsewhere.
pub fn mixing_distribution(row: &[f64], c: f64, mask_id: usize) -> Vec<f64> {
    let mut mix: Vec<f64> = row.iter().map(|&p| c * p).collect();
    mix[mask_id] += 1.0 - c;
    mix
}

/// Reverse step `t -> s`. Revealed positions are copied; each masked position
/// takes one draw from its mixing distribution.
pub fn posterior_step<R: Rng + ?Sized>(
    z: &MaskedSequence,
    s: f64,
    x_hat: &CategoricalGrid,
    schedule: NoiseSchedule,
    rng: &mut R,
) -> Result<MaskedSequence> {
    Ok(posterior_step_traced(z, s, x_hat, schedule, rng)?.0)
}

/// As [`posterior_step`], also returning the mixing vector used per masked
/// position.
pub(crate) fn posterior_step_traced<R: Rng + ?Sized>(
    z: &MaskedSequence,
    s: f64,
    x_hat: &CategoricalGrid,
    schedule: NoiseSchedule,
    rng: &mut R,
) -> Result<(MaskedSequence, Vec<(usize, Vec<f64>)>)> {
    if x_hat.len() != z.len() {
        return Err(Error::Dimension(format!(
            "grid has {} rows for a length-{} sequence",
            x_hat.len(),
            z.len()
        )));
    }
    let c = schedule.unmask_probability(z.time(), s)?;
    let mask_id = z.mask_id();
    let mut next = z.clone();
    let mut mixes = Vec::new();
    for pos in z.masked_positions() {
        let mix = mixing_distribution(x_hat.row(pos), c, mask_id);
        crate::types::check_simplex(&mix).map_err(|reason| Error::NotSimplex { row: pos, reason })?;
        let tok = sample_categorical(&mix, rng);
        if tok != mask_id {
            next.reveal(pos, tok);
        }
        mixes.push((pos, mix));
    }
    Ok((next.with_time(s)?, mixes))
}
