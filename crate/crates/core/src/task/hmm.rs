//! Small discrete HMM with scaled forward-backward.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub initial: Vec<f64>,
    /// `transition[i][j] = P(next = j | current = i)`.
    pub transition: Vec<Vec<f64>>,
}

impl HmmModel {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let n = initial.len();
        if n == 0 || transition.len() != n || transition.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("HMM matrices must be square and match the state count".into()));
        }
        Ok(Self { initial, transition })
    }

    /// Uniform start; with probability `strength` step to the cyclic successor
    /// `(i + 1) mod m`, otherwise jump uniformly.
    pub fn cyclic(states: usize, strength: f64) -> Self {
        let uniform = 1.0 / states as f64;
        let transition = (0..states)
            .map(|i| {
                (0..states)
                    .map(|j| {
                        let succ = if j == (i + 1) % states { strength } else { 0.0 };
                        succ + (1.0 - strength) * uniform
                    })
                    .collect()
            })
            .collect();
        Self {
            initial: vec![uniform; states],
            transition,
        }
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    /// Posterior state marginals given per-position likelihood vectors
    /// `likelihoods[l][state]`.
    pub fn posterior_marginals(&self, likelihoods: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = self.states();
        let len = likelihoods.len();
        if len == 0 {
            return Ok(Vec::new());
        }
        let mut alpha = vec![vec![0.0; m]; len];
        for s in 0..m {
            alpha[0][s] = self.initial[s] * likelihoods[0][s];
        }
        normalize(&mut alpha[0])?;
        for l in 1..len {
            for j in 0..m {
                let inflow: f64 = (0..m).map(|i| alpha[l - 1][i] * self.transition[i][j]).sum();
                alpha[l][j] = inflow * likelihoods[l][j];
            }
            normalize(&mut alpha[l])?;
        }

        let mut beta = vec![vec![1.0; m]; len];
        for l in (0..len - 1).rev() {
            for i in 0..m {
                beta[l][i] = (0..m)
                    .map(|j| self.transition[i][j] * likelihoods[l + 1][j] * beta[l + 1][j])
                    .sum();
            }
            normalize(&mut beta[l])?;
        }

        let mut post = Vec::with_capacity(len);
        for l in 0..len {
            let mut row: Vec<f64> = (0..m).map(|s| alpha[l][s] * beta[l][s]).collect();
            normalize(&mut row)?;
            post.push(row);
        }
        Ok(post)
    }

    /// Unnormalized `P(states[..k] = prefix, evidence)` where the evidence
    /// covers `likelihoods.len() >= prefix.len()` positions; the tail past the
    /// prefix is summed out.
    pub fn prefix_weight(&self, prefix: &[usize], likelihoods: &[Vec<f64>]) -> f64 {
        let m = self.states();
        let k = prefix.len();
        if k == 0 {
            return 1.0;
        }
        let mut w = self.initial[prefix[0]] * likelihoods[0][prefix[0]];
        for l in 1..k {
            w *= self.transition[prefix[l - 1]][prefix[l]] * likelihoods[l][prefix[l]];
        }
        if k < likelihoods.len() {
            let mut beta = vec![1.0; m];
            for l in (k..likelihoods.len()).rev() {
                let next: Vec<f64> = (0..m)
                    .map(|i| {
                        (0..m)
                            .map(|j| self.transition[i][j] * likelihoods[l][j] * beta[j])
                            .sum()
                    })
                    .collect();
                beta = next;
            }
            w *= beta[prefix[k - 1]];
        }
        w
    }
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InconsistentEvidence);
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(())
}
