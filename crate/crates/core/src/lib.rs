//! Conditional masked-diffusion sequence generation.
//!
//! The crate covers the absorbing-state forward process ([`noise`]), the
//! denoiser contract with an exact oracle and a small trainable network
//! ([`denoiser`]), the reweighted denoising and self-correction objectives
//! ([`train`]), parallel-unmasking samplers ([`sampler`]), synthetic
//! conditional-transcription tasks ([`task`]) and WER/RTFx benchmarking
//! ([`eval`]).

pub mod cli;
pub mod denoiser;
pub mod error;
pub mod eval;
pub mod noise;
pub mod sampler;
pub mod task;
pub mod train;
pub mod types;

pub use error::{Error, Result};
