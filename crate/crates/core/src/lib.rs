//! Audio recording device identification from background noise.
//!
//! A recorded signal is modelled as speech plus device noise. The pipeline
//! cuts fixed-length segments from recordings, separates the noise residual
//! with a 1-D wavelet denoiser, turns each residual into a log-magnitude
//! spectral feature vector, and classifies the vectors with from-scratch
//! gradient-descent models (softmax regression, MLPs, a small 1-D CNN) plus
//! averaging and voting ensembles.
//!
//! The [`corpus`] module also synthesizes a labelled multi-device corpus so
//! the whole pipeline can run end to end without physical recorders.

pub mod corpus;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod features;
pub mod learn;
pub mod seeding;

pub use error::{Error, Result};

/// Number of samples in one analysis segment.
pub const SEGMENT_LEN: usize = 4096;

/// Dimension of one spectral feature vector (`SEGMENT_LEN / 2 + 1`).
pub const FEATURE_DIM: usize = SEGMENT_LEN / 2 + 1;
