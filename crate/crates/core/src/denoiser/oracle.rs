use super::Denoiser;
use crate::error::{Error, Result};
use crate::task::{SequenceJoint, TaskSpec};
use crate::types::{CategoricalGrid, Condition, MaskedSequence, TokenId, Vocabulary};

/// Maximum number of completions [`ExactOracle`] will enumerate per call.
pub const ENUMERATION_BUDGET: f64 = 1e6;

/// Ideal denoiser: masked rows are the exact conditionals of the joint given
/// the revealed tokens, computed by enumerating every completion.
#[derive(Debug, Clone)]
pub struct ExactOracle<J> {
    joint: J,
    budget: f64,
}

impl<J: SequenceJoint> ExactOracle<J> {
    pub fn new(joint: J) -> Self {
        Self {
            joint,
            budget: ENUMERATION_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn joint(&self) -> &J {
        &self.joint
    }
}

impl<J: SequenceJoint> Denoiser for ExactOracle<J> {
    fn vocab(&self) -> &Vocabulary {
        self.joint.vocab()
    }

    fn predict(&self, z: &MaskedSequence, cond: &Condition) -> Result<CategoricalGrid> {
        let vocab = self.joint.vocab();
        let support = self.joint.support(cond, z.len())?;
        let masked = z.masked_positions();
        let needed: f64 = masked.iter().map(|&p| support[p].len() as f64).product();
        if needed > self.budget {
            return Err(Error::EnumerationBudget {
                needed,
                budget: self.budget,
            });
        }

        let width = vocab.size();
        let mut acc = vec![0.0; masked.len() * width];
        let mut total = 0.0;
        let mut canvas: Vec<TokenId> = z.ids().to_vec();
        let mut digits = vec![0usize; masked.len()];
        if masked.iter().any(|&p| support[p].is_empty()) {
            return Err(Error::InconsistentEvidence);
        }
        loop {
            for (k, &p) in masked.iter().enumerate() {
                canvas[p] = support[p][digits[k]];
            }
            let w = self.joint.weight(cond, &canvas)?;
            if w > 0.0 {
                total += w;
                for (k, &p) in masked.iter().enumerate() {
                    acc[k * width + canvas[p]] += w;
                }
            }
            // mixed-radix increment
            let mut k = 0;
            while k < digits.len() {
                digits[k] += 1;
                if digits[k] < support[masked[k]].len() {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
            if k == digits.len() {
                break;
            }
        }
        if !(total > 0.0) {
            return Err(Error::InconsistentEvidence);
        }

        let mut probs = vec![0.0; z.len() * width];
        for pos in 0..z.len() {
            if !z.is_masked(pos) {
                probs[pos * width + z.ids()[pos]] = 1.0;
            }
        }
        for (k, &p) in masked.iter().enumerate() {
            for tok in 0..width {
                probs[p * width + tok] = acc[k * width + tok] / total;
            }
        }
        CategoricalGrid::from_flat(probs, vocab)
    }
}

/// Ideal denoiser for the synthetic tasks using the closed-form channel
/// posterior or forward-backward. Scales to long canvases.
#[derive(Debug, Clone)]
pub struct AnalyticOracle {
    spec: TaskSpec,
    vocab: Vocabulary,
}

impl AnalyticOracle {
    pub fn new(spec: TaskSpec) -> Result<Self> {
        spec.validate()?;
        let vocab = spec.vocab();
        Ok(Self { spec, vocab })
    }
}

impl Denoiser for AnalyticOracle {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(&self, z: &MaskedSequence, cond: &Condition) -> Result<CategoricalGrid> {
        self.spec.exact_posterior(cond, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{TableJoint, TaskJoint, TaskKind};

    fn dummy_cond() -> Condition {
        Condition::new(vec![vec![0.0]], 1.0).unwrap()
    }

    #[test]
    fn hand_built_joint_conditional() {
        // w0 = A, w1 = B
        let vocab = Vocabulary::synthetic(2).unwrap();
        let joint = TableJoint::new(
            vocab.clone(),
            vec![(vec![0, 0], 0.5), (vec![0, 1], 0.25), (vec![1, 0], 0.25)],
        )
        .unwrap();
        let oracle = ExactOracle::new(joint);
        let z = MaskedSequence::new(vec![0, vocab.mask_id()], 0.5, &vocab).unwrap();
        let grid = oracle.predict(&z, &dummy_cond()).unwrap();
        assert!((grid.row(1)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((grid.row(1)[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(grid.row(0)[0], 1.0);
    }

    #[test]
    fn independent_uniform_gives_uniform_rows() {
        let vocab = Vocabulary::synthetic(3).unwrap();
        let mut table = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                table.push((vec![a, b], 1.0 / 9.0));
            }
        }
        let oracle = ExactOracle::new(TableJoint::new(vocab.clone(), table).unwrap());
        let grid = oracle
            .predict(&MaskedSequence::fully_masked(2, &vocab), &dummy_cond())
            .unwrap();
        for row in grid.rows() {
            for &p in &row[..3] {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_free_task_gives_one_hot() {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 4, (3, 4), 0.0).with_seed(8);
        let oracle = ExactOracle::new(TaskJoint::new(spec.clone()).unwrap());
        for ex in spec.generate(5).unwrap() {
            let z = MaskedSequence::fully_masked(ex.target.len(), oracle.vocab());
            let grid = oracle.predict(&z, &ex.cond).unwrap();
            for (l, &tok) in ex.target.ids().iter().enumerate() {
                assert!((grid.row(l)[tok] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn enumeration_budget_enforced() {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 5, (9, 9), 0.2);
        let ex = &spec.generate(1).unwrap()[0];
        let oracle = ExactOracle::new(TaskJoint::new(spec.clone()).unwrap());
        let z = MaskedSequence::fully_masked(9, oracle.vocab());
        assert!(matches!(
            oracle.predict(&z, &ex.cond),
            Err(Error::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn enumeration_agrees_with_analytic() {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 3, (3, 3), 0.3).with_seed(21);
        let exact = ExactOracle::new(TaskJoint::new(spec.clone()).unwrap());
        let analytic = AnalyticOracle::new(spec.clone()).unwrap();
        let vocab = spec.vocab();
        for ex in spec.generate(5).unwrap() {
            // Canvas longer than the content, one revealed token.
            let mut ids = vec![vocab.mask_id(); 5];
            ids[1] = ex.target.ids()[1];
            let z = MaskedSequence::new(ids, 0.6, &vocab).unwrap();
            let a = exact.predict(&z, &ex.cond).unwrap();
            let b = analytic.predict(&z, &ex.cond).unwrap();
            for l in 0..5 {
                for s in 0..vocab.size() {
                    assert!((a.row(l)[s] - b.row(l)[s]).abs() < 1e-12);
                }
            }
        }
    }
}
