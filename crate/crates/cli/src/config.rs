//! Declarative experiment configuration.
//!
//! One TOML file captures every axis of the experiment grid: corpus shape,
//! denoiser, feature mode, classifier and its depth, ensembling, and the
//! optimizer. Command-line flags override the seed and the output
//! directory; everything else lives in the file so a run is reproducible
//! from one artifact.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use deviceprint::corpus::CorpusSpec;
use deviceprint::denoise::DenoiseConfig;
use deviceprint::features::FeatureMode;
use deviceprint::learn::{MlpLoss, TrainConfig};
use deviceprint::{Error, Result};

/// Hidden width of every MLP hidden layer.
pub const HIDDEN_WIDTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classifier {
    Softmax,
    Mlp,
    MlpAveraged,
    Cnn,
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classifier::Softmax => write!(f, "softmax"),
            Classifier::Mlp => write!(f, "mlp"),
            Classifier::MlpAveraged => write!(f, "mlp-averaged"),
            Classifier::Cnn => write!(f, "cnn"),
        }
    }
}

/// Optimizer section; `learning_rate` defaults per classifier when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lambda: f64,
    pub mlp_loss: MlpLoss,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: None,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            lambda: 1e-4,
            mlp_loss: MlpLoss::SquaredError,
        }
    }
}

impl TrainSection {
    /// Concrete optimizer settings for one classifier: full-batch softmax
    /// defaults to learning rate 0.5, the networks to 0.1.
    pub fn resolve(&self, classifier: Classifier) -> TrainConfig {
        let learning_rate = self.learning_rate.unwrap_or(match classifier {
            Classifier::Softmax => 0.5,
            _ => 0.1,
        });
        TrainConfig {
            learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: CorpusSpec,
    pub denoise: DenoiseConfig,
    pub feature_mode: FeatureMode,
    pub classifier: Classifier,
    pub mlp_hidden_layers: usize,
    pub chunk_count: usize,
    pub voters: usize,
    pub train: TrainSection,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: CorpusSpec::default(),
            denoise: DenoiseConfig::default(),
            feature_mode: FeatureMode::Noise,
            classifier: Classifier::Mlp,
            mlp_hidden_layers: 3,
            chunk_count: 4,
            voters: 5,
            train: TrainSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        if self.mlp_hidden_layers == 0 || self.mlp_hidden_layers > 3 {
            return Err(Error::Config(format!(
                "mlp_hidden_layers is {}, the explored range is 1 to 3",
                self.mlp_hidden_layers
            )));
        }
        if self.chunk_count < 2 {
            return Err(Error::Config("chunk_count must be at least 2".into()));
        }
        if self.voters == 0 {
            return Err(Error::Config("voters must be at least 1".into()));
        }
        if self.denoise.levels == 0 || self.denoise.levels > 12 {
            return Err(Error::Config(format!(
                "denoise levels {} outside 1..=12",
                self.denoise.levels
            )));
        }
        Ok(())
    }

    /// Applies `--seed` / `--out` flag overrides. The seed flag drives both
    /// the corpus and the optimizer streams.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(seed) = seed {
            self.corpus.seed = seed;
            self.train.seed = seed;
        }
        if let Some(out) = out {
            self.output_dir = out;
        }
        self
    }

    /// MLP size chain for the given hidden-layer count.
    pub fn layer_sizes(&self, input_dim: usize, class_count: usize, hidden_layers: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(hidden_layers + 2);
        sizes.push(input_dim);
        sizes.extend(std::iter::repeat_n(HIDDEN_WIDTH, hidden_layers));
        sizes.push(class_count);
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let config = ExperimentConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let parsed: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(parsed, ExperimentConfig::default());
    }

    #[test]
    fn learning_rate_defaults_per_classifier() {
        let section = TrainSection::default();
        assert_eq!(section.resolve(Classifier::Softmax).learning_rate, 0.5);
        assert_eq!(section.resolve(Classifier::Mlp).learning_rate, 0.1);
        assert_eq!(section.resolve(Classifier::Cnn).learning_rate, 0.1);
        let pinned = TrainSection {
            learning_rate: Some(0.03),
            ..TrainSection::default()
        };
        assert_eq!(pinned.resolve(Classifier::Softmax).learning_rate, 0.03);
    }

    #[test]
    fn validation_rejects_bad_axes() {
        let mut config = ExperimentConfig::default();
        config.mlp_hidden_layers = 4;
        assert!(config.validate().is_err());
        config.mlp_hidden_layers = 2;
        config.voters = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn layer_sizes_follow_the_hidden_count() {
        let config = ExperimentConfig::default();
        assert_eq!(
            config.layer_sizes(2049, 9, 3),
            vec![2049, 256, 256, 256, 9]
        );
        assert_eq!(config.layer_sizes(2049, 9, 1), vec![2049, 256, 9]);
    }
}
