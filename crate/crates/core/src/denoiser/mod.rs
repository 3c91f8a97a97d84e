//! The denoiser contract `x_theta(z_t, a)` and its implementations.

mod checkpoint;
mod neural;
mod oracle;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use neural::{Gradients, NeuralConfig, NeuralDenoiser, Tensor};
pub use oracle::{AnalyticOracle, ExactOracle, ENUMERATION_BUDGET};

use crate::error::Result;
use crate::types::{CategoricalGrid, Condition, MaskedSequence, Vocabulary};

/// Predicts a clean-token distribution for every canvas position.
///
/// Implementations return rows on the simplex with zero MASK mass, and
/// one-hot rows at positions that are already revealed. The diffusion time
/// of `z` is not an input.
pub trait Denoiser: Sync {
    fn vocab(&self) -> &Vocabulary;

    fn predict(&self, z: &MaskedSequence, cond: &Condition) -> Result<CategoricalGrid>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn predict(&self, z: &MaskedSequence, cond: &Condition) -> Result<CategoricalGrid> {
        (**self).predict(z, cond)
    }
}
