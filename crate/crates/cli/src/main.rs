use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deviceprint::Result;
use deviceprint_cli::commands::{self, DataInput};
use deviceprint_cli::config::{Classifier, ExperimentConfig};

/// Identifies audio recording devices from their background noise.
#[derive(Parser)]
#[command(name = "deviceprint", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the corpus and optimizer seeds [default: from config, 0]
    #[arg(long)]
    seed: Option<u64>,

    /// Override the output directory [default: from config, "out"]
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(config.with_overrides(self.seed, self.out.clone()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the multi-device corpus under <out>/corpus
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Validate real recordings against a label map and write a manifest
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Directory holding the WAV files
        #[arg(long)]
        dir: PathBuf,
        /// Label map: one `path<TAB>label<TAB>role` line per file
        #[arg(long)]
        labels: PathBuf,
    },
    /// Cut segments and write train/test feature matrices (ADFM)
    Featurize {
        #[command(flatten)]
        common: Common,
        /// Corpus manifest [default: <out>/corpus/manifest.tsv]
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train the configured classifier and write the model file
    Train {
        #[command(flatten)]
        common: Common,
        /// Feature matrix for softmax/mlp/mlp-averaged
        /// [default: <out>/features/<mode>_train.adfm]
        #[arg(long)]
        features: Option<PathBuf>,
        /// Corpus manifest, required for the cnn classifier
        /// [default: <out>/corpus/manifest.tsv]
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Evaluate a model file; prints accuracy=<value>
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Trained model file (ADID)
        #[arg(long)]
        model: PathBuf,
        /// Test feature matrix [default: <out>/features/<mode>_test.adfm]
        #[arg(long)]
        features: Option<PathBuf>,
        /// Corpus manifest, used instead of features for cnn models
        /// [default: <out>/corpus/manifest.tsv]
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Majority-vote evaluation over fresh segment draws
    VoteEval {
        #[command(flatten)]
        common: Common,
        /// Trained model file (ADID)
        #[arg(long)]
        model: PathBuf,
        /// Corpus manifest [default: <out>/corpus/manifest.tsv]
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Number of voters [default: from config, 5]
        #[arg(long)]
        voters: Option<usize>,
    },
    /// Run the whole experiment grid and write summary.csv
    Grid {
        #[command(flatten)]
        common: Common,
        /// Corpus manifest [default: <out>/corpus/manifest.tsv]
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn default_manifest(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join("corpus").join("manifest.tsv")
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { common } => {
            let config = common.resolve()?;
            commands::cmd_synth(&config)?;
        }
        Command::Ingest {
            common,
            dir,
            labels,
        } => {
            let config = common.resolve()?;
            commands::cmd_ingest(&dir, &labels, &config)?;
        }
        Command::Featurize { common, manifest } => {
            let config = common.resolve()?;
            let manifest = manifest.unwrap_or_else(|| default_manifest(&config));
            commands::cmd_featurize(&manifest, &config)?;
        }
        Command::Train {
            common,
            features,
            manifest,
        } => {
            let config = common.resolve()?;
            let (default_train, _) = commands::feature_paths(&config, config.feature_mode);
            if config.classifier == Classifier::Cnn && features.is_none() {
                let manifest = manifest.unwrap_or_else(|| default_manifest(&config));
                commands::cmd_train(DataInput::Manifest(&manifest), &config)?;
            } else if let Some(features) = features.or(Some(default_train)) {
                commands::cmd_train(DataInput::Features(&features), &config)?;
            }
        }
        Command::Evaluate {
            common,
            model,
            features,
            manifest,
        } => {
            let config = common.resolve()?;
            let (_, default_test) = commands::feature_paths(&config, config.feature_mode);
            let loaded = deviceprint::learn::load_model(&model)?;
            let is_cnn = matches!(loaded, deviceprint::learn::Model::Cnn(_));
            drop(loaded);
            if is_cnn && features.is_none() {
                let manifest = manifest.unwrap_or_else(|| default_manifest(&config));
                commands::cmd_evaluate(&model, DataInput::Manifest(&manifest), &config)?;
            } else {
                let features = features.unwrap_or(default_test);
                commands::cmd_evaluate(&model, DataInput::Features(&features), &config)?;
            }
        }
        Command::VoteEval {
            common,
            model,
            manifest,
            voters,
        } => {
            let config = common.resolve()?;
            let manifest = manifest.unwrap_or_else(|| default_manifest(&config));
            let voters = voters.unwrap_or(config.voters);
            commands::cmd_vote_eval(&model, &manifest, voters, &config)?;
        }
        Command::Grid { common, manifest } => {
            let config = common.resolve()?;
            let manifest = manifest.unwrap_or_else(|| default_manifest(&config));
            commands::cmd_grid(&manifest, &config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
