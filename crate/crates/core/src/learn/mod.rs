//! From-scratch classifiers and ensembles.
//!
//! Softmax regression is trained by full-batch gradient descent; the MLPs
//! (plain and chunk-averaged) and the 1-D CNN by mini-batch SGD with
//! backpropagation. All training is a pure function of (data, config, seed):
//! per-batch gradients are accumulated over fixed-size index chunks that are
//! summed in order, so results do not depend on worker-thread count.

pub mod averaged;
pub mod cnn;
pub mod io;
pub mod mlp;
pub mod softmax;
pub mod vote;

pub use averaged::AveragedMlpModel;
pub use cnn::{CnnArch, CnnModel};
pub use io::{load_model, save_model, Model};
pub use mlp::{mlp_error, MlpLoss, MlpModel};
pub use softmax::SoftmaxModel;
pub use vote::vote;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Work-chunk size for parallel gradient accumulation. Fixed so the
/// summation grouping (and therefore every trained parameter bit) is
/// independent of how many threads happen to run.
pub(crate) const GRAD_CHUNK: usize = 16;

/// Optimizer hyperparameters. The paper states none; these defaults are
/// fixed here so experiments reproduce, and every field can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight-decay coefficient; used by softmax regression only.
    pub lambda: f64,
}

impl Default for TrainConfig {
    /// MLP/CNN defaults.
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            lambda: 1e-4,
        }
    }
}

impl TrainConfig {
    /// Full-batch softmax defaults.
    pub fn for_softmax() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive and finite"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be non-negative and finite"));
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest class index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_labels(labels: &[u16], class_count: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("no labels".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= class_count) {
        return Err(Error::shape(format!(
            "label {bad} outside the {class_count}-class range"
        )));
    }
    Ok(())
}
