//! Subcommand implementations. Each function is callable as a library so
//! tests can drive the exact code path the binary runs.

use std::fs;
use std::path::{Path, PathBuf};

use deviceprint::corpus::manifest::{Manifest, Role};
use deviceprint::corpus::synth::synth_corpus;
use deviceprint::corpus::{load_wav, Segment};
use deviceprint::eval::{evaluate, export_report, report_from_predictions, EvalReport};
use deviceprint::features::{read_adfm, write_adfm, FeatureMatrix, FeatureMode};
use deviceprint::learn::{averaged, cnn, mlp, softmax, Model};
use deviceprint::{Error, Result, FEATURE_DIM};

use crate::config::{Classifier, ExperimentConfig};
use crate::pipeline::{self, VoteOutcome};

/// Where a training or evaluation command reads its inputs.
#[derive(Debug, Clone, Copy)]
pub enum DataInput<'a> {
    /// An ADFM feature-matrix file.
    Features(&'a Path),
    /// A corpus manifest; segments are drawn and processed on the fly.
    Manifest(&'a Path),
}

/// Synthesizes the corpus under `<output_dir>/corpus`.
pub fn cmd_synth(config: &ExperimentConfig) -> Result<PathBuf> {
    let out = config.output_dir.join("corpus");
    let manifest_path = synth_corpus(&config.corpus, &out)?;
    let manifest = Manifest::read(&manifest_path)?;
    println!(
        "synthesized {} recordings for {} devices -> {}",
        manifest.entries.len(),
        config.corpus.device_count,
        manifest_path.display()
    );
    Ok(manifest_path)
}

/// Validates user-provided recordings against a label map and writes a
/// verified manifest (with absolute paths) under the output directory.
pub fn cmd_ingest(dir: &Path, labels: &Path, config: &ExperimentConfig) -> Result<PathBuf> {
    let map = Manifest::read(labels)?;
    if map.entries.is_empty() {
        return Err(Error::EmptyInput(format!(
            "label map {} holds no entries",
            labels.display()
        )));
    }
    let mut verified = Vec::with_capacity(map.entries.len());
    let mut train = 0usize;
    let mut test = 0usize;
    for entry in &map.entries {
        let path = dir.join(&entry.relative_path);
        let recording = load_wav(&path, entry.device_label).map_err(|e| {
            Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
        })?;
        match entry.role {
            Role::Train => train += 1,
            Role::Test => test += 1,
        }
        println!(
            "ingested {} ({} samples @ {} Hz, device {})",
            entry.relative_path.display(),
            recording.len(),
            recording.sample_rate(),
            entry.device_label
        );
        let mut abs = entry.clone();
        abs.relative_path = fs::canonicalize(&path)?;
        verified.push(abs);
    }
    fs::create_dir_all(&config.output_dir)?;
    let out = config.output_dir.join("ingested_manifest.tsv");
    Manifest { entries: verified }.write(&out)?;
    println!("{train} train / {test} test recordings -> {}", out.display());
    Ok(out)
}

/// File names of the featurized train and test matrices for a mode.
pub fn feature_paths(config: &ExperimentConfig, mode: FeatureMode) -> (PathBuf, PathBuf) {
    let dir = config.output_dir.join("features");
    let tag = match mode {
        FeatureMode::Noise => "noise",
        FeatureMode::Raw => "raw",
    };
    (
        dir.join(format!("{tag}_train.adfm")),
        dir.join(format!("{tag}_test.adfm")),
    )
}

/// Featurizes the corpus (draw 0) into ADFM train/test files.
pub fn cmd_featurize(manifest_path: &Path, config: &ExperimentConfig) -> Result<(PathBuf, PathBuf)> {
    let manifest = Manifest::read(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::EmptyInput(format!(
            "manifest {} holds no entries",
            manifest_path.display()
        )));
    }
    let mode = config.feature_mode;
    let (train_path, test_path) = feature_paths(config, mode);
    fs::create_dir_all(train_path.parent().unwrap())?;

    let train = pipeline::build_features(
        manifest_path,
        &manifest,
        Role::Train,
        config.corpus.train_segments_per_recording,
        config.corpus.seed,
        0,
        mode,
        &config.denoise,
    )?;
    write_adfm(&train_path, &train)?;
    println!(
        "featurized {} train segments ({mode:?}) -> {}",
        train.len(),
        train_path.display()
    );
    drop(train);

    let test = pipeline::build_features(
        manifest_path,
        &manifest,
        Role::Test,
        config.corpus.test_segments_per_recording,
        config.corpus.seed,
        0,
        mode,
        &config.denoise,
    )?;
    write_adfm(&test_path, &test)?;
    println!(
        "featurized {} test segments ({mode:?}) -> {}",
        test.len(),
        test_path.display()
    );
    Ok((train_path, test_path))
}

fn class_count_for(config: &ExperimentConfig, labels: &[u16]) -> usize {
    let from_labels = labels.iter().map(|&l| usize::from(l) + 1).max().unwrap_or(0);
    from_labels.max(config.corpus.device_count)
}

fn model_file_name(config: &ExperimentConfig) -> String {
    let mode = match config.feature_mode {
        FeatureMode::Noise => "noise",
        FeatureMode::Raw => "raw",
    };
    match config.classifier {
        Classifier::Softmax => format!("softmax_{mode}.adid"),
        Classifier::Mlp => format!("mlp-{}_{mode}.adid", config.mlp_hidden_layers),
        Classifier::MlpAveraged => format!(
            "mlp-averaged-{}x{}_{mode}.adid",
            config.mlp_hidden_layers, config.chunk_count
        ),
        Classifier::Cnn => "cnn_raw.adid".to_string(),
    }
}

fn require_features<'a>(input: DataInput<'a>, classifier: Classifier) -> Result<&'a Path> {
    match input {
        DataInput::Features(path) => Ok(path),
        DataInput::Manifest(_) => Err(Error::Config(format!(
            "{classifier} consumes feature files; pass --features"
        ))),
    }
}

/// Trains the configured classifier and writes the model file. Returns the
/// model path and the final training loss.
pub fn cmd_train(input: DataInput<'_>, config: &ExperimentConfig) -> Result<(PathBuf, f64)> {
    let (model, final_loss) = train_model(input, config)?;
    let models_dir = config.output_dir.join("models");
    fs::create_dir_all(&models_dir)?;
    let path = models_dir.join(model_file_name(config));
    deviceprint::learn::save_model(&model, &path)?;
    println!("final training loss: {final_loss}");
    println!("model -> {}", path.display());
    Ok((path, final_loss))
}

/// Trains in memory; shared by `cmd_train` and the grid.
pub fn train_model(input: DataInput<'_>, config: &ExperimentConfig) -> Result<(Model, f64)> {
    let train_config = config.train.resolve(config.classifier);
    match config.classifier {
        Classifier::Softmax => {
            let matrix = read_adfm(require_features(input, config.classifier)?)?;
            let k = class_count_for(config, matrix.labels());
            let (model, costs) =
                softmax::train(matrix.data(), matrix.labels(), k, &train_config)?;
            Ok((Model::Softmax(model), *costs.last().unwrap()))
        }
        Classifier::Mlp => {
            let matrix = read_adfm(require_features(input, config.classifier)?)?;
            let k = class_count_for(config, matrix.labels());
            let sizes = config.layer_sizes(matrix.dim(), k, config.mlp_hidden_layers);
            let model = mlp::train_with_loss(
                matrix.data(),
                matrix.labels(),
                &sizes,
                &train_config,
                config.train.mlp_loss,
            )?;
            let loss =
                mlp::batch_loss(&model, matrix.data(), matrix.labels(), config.train.mlp_loss)?;
            Ok((Model::Mlp(model), loss))
        }
        Classifier::MlpAveraged => {
            let matrix = read_adfm(require_features(input, config.classifier)?)?;
            let k = class_count_for(config, matrix.labels());
            let sizes = config.layer_sizes(matrix.dim(), k, config.mlp_hidden_layers);
            let model = averaged::train(
                matrix.data(),
                matrix.labels(),
                config.chunk_count,
                &sizes,
                &train_config,
            )?;
            let loss = averaged::batch_loss(
                &model,
                matrix.data(),
                matrix.labels(),
                config.train.mlp_loss,
            )?;
            Ok((Model::Averaged(model), loss))
        }
        Classifier::Cnn => {
            let manifest_path = match input {
                DataInput::Manifest(path) => path,
                DataInput::Features(_) => {
                    return Err(Error::Config(
                        "cnn consumes raw segments; pass --manifest".into(),
                    ))
                }
            };
            let manifest = Manifest::read(manifest_path)?;
            let segments = pipeline::collect_segments(
                manifest_path,
                &manifest,
                Role::Train,
                config.corpus.train_segments_per_recording,
                config.corpus.seed,
                0,
            )?;
            let (data, labels) = cnn::segment_matrix(&segments)?;
            drop(segments);
            let k = class_count_for(config, &labels);
            let arch = cnn::CnnArch::standard(k);
            let model = cnn::train(data.view(), &labels, arch, &train_config)?;
            let loss = cnn::batch_loss(&model, data.view(), &labels)?;
            Ok((Model::Cnn(model), loss))
        }
    }
}

/// Evaluates a model file and writes report CSVs. Prints `accuracy=<value>`.
pub fn cmd_evaluate(
    model_path: &Path,
    input: DataInput<'_>,
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    let model = deviceprint::learn::load_model(model_path)?;
    let report = evaluate_model(&model, input, config)?;
    let stem = model_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let report_dir = config.output_dir.join("reports").join(stem);
    export_report(&report, &report_dir)?;
    println!("accuracy={:.4}", report.accuracy);
    println!("reports -> {}", report_dir.display());
    Ok(report)
}

/// Evaluates an in-memory model; shared by `cmd_evaluate` and the grid.
pub fn evaluate_model(
    model: &Model,
    input: DataInput<'_>,
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    match model {
        Model::Cnn(m) => {
            let manifest_path = match input {
                DataInput::Manifest(path) => path,
                DataInput::Features(_) => {
                    return Err(Error::Config(
                        "cnn consumes raw segments; pass --manifest".into(),
                    ))
                }
            };
            let manifest = Manifest::read(manifest_path)?;
            let segments = pipeline::collect_segments(
                manifest_path,
                &manifest,
                Role::Test,
                config.corpus.test_segments_per_recording,
                config.corpus.seed,
                0,
            )?;
            evaluate_cnn(m, &segments)
        }
        _ => {
            let matrix = read_adfm(require_features(input, config.classifier)?)?;
            evaluate_features(model, &matrix, config)
        }
    }
}

/// Evaluates a feature-space model against a feature matrix.
pub fn evaluate_features(
    model: &Model,
    matrix: &FeatureMatrix,
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    let expected = match model {
        Model::Softmax(m) => m.feature_dim(),
        Model::Mlp(m) => m.input_dim(),
        Model::Averaged(m) => m.input_dim(),
        Model::Cnn(_) => FEATURE_DIM,
    };
    if matrix.dim() != expected {
        return Err(Error::Shape(format!(
            "model expects dimension {expected}, features have {}",
            matrix.dim()
        )));
    }
    let k = class_count_for(config, matrix.labels()).max(model.class_count());
    evaluate(|x| pipeline::predict_class(model, x), matrix, k)
}

/// Evaluates a CNN over raw test segments.
pub fn evaluate_cnn(model: &cnn::CnnModel, segments: &[Segment]) -> Result<EvalReport> {
    if segments.is_empty() {
        return Err(Error::EmptyInput("no test segments".into()));
    }
    let mut truths = Vec::with_capacity(segments.len());
    let mut predictions = Vec::with_capacity(segments.len());
    for segment in segments {
        truths.push(segment.device_label());
        predictions.push(model.predict_class(segment.samples())?);
    }
    let k = truths
        .iter()
        .map(|&t| usize::from(t) + 1)
        .max()
        .unwrap_or(0)
        .max(model.class_count());
    report_from_predictions(&truths, &predictions, k)
}

/// Voting evaluation; prints `voted_accuracy=<value>` and writes a report.
pub fn cmd_vote_eval(
    model_path: &Path,
    manifest_path: &Path,
    voters: usize,
    config: &ExperimentConfig,
) -> Result<VoteOutcome> {
    let model = deviceprint::learn::load_model(model_path)?;
    let outcome = vote_eval_model(&model, manifest_path, voters, config)?;

    let k = outcome
        .truths
        .iter()
        .map(|&t| usize::from(t) + 1)
        .max()
        .unwrap_or(0)
        .max(model.class_count());
    let report = report_from_predictions(&outcome.truths, &outcome.predictions, k)?;
    let stem = model_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let report_dir = config
        .output_dir
        .join("reports")
        .join(format!("vote-{voters}_{stem}"));
    export_report(&report, &report_dir)?;
    println!("voted_accuracy={:.4}", outcome.accuracy);
    Ok(outcome)
}

/// Voting evaluation of an in-memory model.
pub fn vote_eval_model(
    model: &Model,
    manifest_path: &Path,
    voters: usize,
    config: &ExperimentConfig,
) -> Result<VoteOutcome> {
    let manifest = Manifest::read(manifest_path)?;
    pipeline::vote_eval(
        model,
        manifest_path,
        &manifest,
        config.corpus.test_segments_per_recording,
        config.corpus.seed,
        voters,
        config.feature_mode,
        &config.denoise,
    )
}

/// One grid row: a configuration name and its test accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub name: String,
    pub accuracy: f64,
}

/// Runs the whole experiment grid against a synthesized corpus: softmax and
/// MLP depths 1-3 on noise features, the chunk-averaged MLPs, the raw-mode
/// ablation (softmax, MLP-3, CNN), and voting with 1, 3, and 5 voters.
/// Writes model files, per-row reports, and `summary.csv`; returns the rows.
pub fn cmd_grid(manifest_path: &Path, config: &ExperimentConfig) -> Result<Vec<GridRow>> {
    if !manifest_path.exists() {
        return Err(Error::Config(format!(
            "corpus manifest {} not found; run `synth` first",
            manifest_path.display()
        )));
    }
    let manifest = Manifest::read(manifest_path)?;
    let models_dir = config.output_dir.join("models");
    fs::create_dir_all(&models_dir)?;

    let mut rows: Vec<GridRow> = Vec::new();
    let mut grid = GridContext {
        manifest_path,
        manifest: &manifest,
        config,
        models_dir,
        rows: &mut rows,
    };
    grid.run()?;

    let summary_path = config.output_dir.join("summary.csv");
    let mut summary = String::from("configuration,accuracy\n");
    for row in rows.iter() {
        summary.push_str(&format!("{},{:.4}\n", row.name, row.accuracy));
    }
    fs::write(&summary_path, summary)?;
    println!("summary -> {}", summary_path.display());
    Ok(rows)
}

struct GridContext<'a> {
    manifest_path: &'a Path,
    manifest: &'a Manifest,
    config: &'a ExperimentConfig,
    models_dir: PathBuf,
    rows: &'a mut Vec<GridRow>,
}

impl GridContext<'_> {
    fn record(&mut self, name: &str, model: &Model, report: &EvalReport) -> Result<()> {
        deviceprint::learn::save_model(
            model,
            &self.models_dir.join(format!("{}.adid", name.replace('/', "_"))),
        )?;
        let report_dir = self
            .config
            .output_dir
            .join("reports")
            .join(name.replace('/', "_"));
        export_report(report, &report_dir)?;
        println!("{name}: accuracy={:.4}", report.accuracy);
        self.rows.push(GridRow {
            name: name.to_string(),
            accuracy: report.accuracy,
        });
        Ok(())
    }

    fn features(&self, mode: FeatureMode, role: Role) -> Result<FeatureMatrix> {
        let count = match role {
            Role::Train => self.config.corpus.train_segments_per_recording,
            Role::Test => self.config.corpus.test_segments_per_recording,
        };
        pipeline::build_features(
            self.manifest_path,
            self.manifest,
            role,
            count,
            self.config.corpus.seed,
            0,
            mode,
            &self.config.denoise,
        )
    }

    fn with_classifier(&self, classifier: Classifier, hidden: usize, mode: FeatureMode) -> ExperimentConfig {
        ExperimentConfig {
            classifier,
            mlp_hidden_layers: hidden,
            feature_mode: mode,
            ..self.config.clone()
        }
    }

    fn run(&mut self) -> Result<()> {
        let k = self
            .manifest
            .class_count()
            .max(self.config.corpus.device_count);

        // Noise-feature phase.
        let train = self.features(FeatureMode::Noise, Role::Train)?;
        let test = self.features(FeatureMode::Noise, Role::Test)?;
        let mut vote_model: Option<Model> = None;

        {
            let cfg = self.with_classifier(Classifier::Softmax, 3, FeatureMode::Noise);
            let (model, costs) = softmax::train(
                train.data(),
                train.labels(),
                k,
                &cfg.train.resolve(Classifier::Softmax),
            )?;
            let model = Model::Softmax(model);
            let report = evaluate_features(&model, &test, &cfg)?;
            drop(costs);
            self.record("softmax/noise", &model, &report)?;
        }
        for hidden in 1..=3 {
            let cfg = self.with_classifier(Classifier::Mlp, hidden, FeatureMode::Noise);
            let sizes = cfg.layer_sizes(train.dim(), k, hidden);
            let model = mlp::train_with_loss(
                train.data(),
                train.labels(),
                &sizes,
                &cfg.train.resolve(Classifier::Mlp),
                cfg.train.mlp_loss,
            )?;
            let model = Model::Mlp(model);
            let report = evaluate_features(&model, &test, &cfg)?;
            self.record(&format!("mlp-{hidden}/noise"), &model, &report)?;
            if hidden == 3 {
                vote_model = Some(model);
            }
        }
        for hidden in 1..=3 {
            let cfg = self.with_classifier(Classifier::MlpAveraged, hidden, FeatureMode::Noise);
            let sizes = cfg.layer_sizes(train.dim(), k, hidden);
            let model = averaged::train(
                train.data(),
                train.labels(),
                cfg.chunk_count,
                &sizes,
                &cfg.train.resolve(Classifier::MlpAveraged),
            )?;
            let model = Model::Averaged(model);
            let report = evaluate_features(&model, &test, &cfg)?;
            self.record(&format!("mlp-averaged-{hidden}/noise"), &model, &report)?;
        }
        drop(train);
        drop(test);

        // Raw-feature ablation.
        let train = self.features(FeatureMode::Raw, Role::Train)?;
        let test = self.features(FeatureMode::Raw, Role::Test)?;
        {
            let cfg = self.with_classifier(Classifier::Softmax, 3, FeatureMode::Raw);
            let (model, _) = softmax::train(
                train.data(),
                train.labels(),
                k,
                &cfg.train.resolve(Classifier::Softmax),
            )?;
            let model = Model::Softmax(model);
            let report = evaluate_features(&model, &test, &cfg)?;
            self.record("softmax/raw", &model, &report)?;
        }
        {
            let cfg = self.with_classifier(Classifier::Mlp, 3, FeatureMode::Raw);
            let sizes = cfg.layer_sizes(train.dim(), k, 3);
            let model = mlp::train_with_loss(
                train.data(),
                train.labels(),
                &sizes,
                &cfg.train.resolve(Classifier::Mlp),
                cfg.train.mlp_loss,
            )?;
            let model = Model::Mlp(model);
            let report = evaluate_features(&model, &test, &cfg)?;
            self.record("mlp-3/raw", &model, &report)?;
        }
        drop(train);
        drop(test);

        // CNN on raw time-domain segments.
        {
            let cfg = self.with_classifier(Classifier::Cnn, 3, FeatureMode::Raw);
            let segments = pipeline::collect_segments(
                self.manifest_path,
                self.manifest,
                Role::Train,
                cfg.corpus.train_segments_per_recording,
                cfg.corpus.seed,
                0,
            )?;
            let (data, labels) = cnn::segment_matrix(&segments)?;
            drop(segments);
            let model = cnn::train(
                data.view(),
                &labels,
                cnn::CnnArch::standard(k),
                &cfg.train.resolve(Classifier::Cnn),
            )?;
            drop(data);
            let test_segments = pipeline::collect_segments(
                self.manifest_path,
                self.manifest,
                Role::Test,
                cfg.corpus.test_segments_per_recording,
                cfg.corpus.seed,
                0,
            )?;
            let report = evaluate_cnn(&model, &test_segments)?;
            self.record("cnn/raw", &Model::Cnn(model), &report)?;
        }

        // Voting over the MLP-3 noise model.
        let vote_model = vote_model.expect("mlp-3/noise trained above");
        for voters in [1usize, 3, 5] {
            let outcome = pipeline::vote_eval(
                &vote_model,
                self.manifest_path,
                self.manifest,
                self.config.corpus.test_segments_per_recording,
                self.config.corpus.seed,
                voters,
                FeatureMode::Noise,
                &self.config.denoise,
            )?;
            println!("vote-{voters}/noise: accuracy={:.4}", outcome.accuracy);
            self.rows.push(GridRow {
                name: format!("vote-{voters}/noise"),
                accuracy: outcome.accuracy,
            });
        }
        Ok(())
    }
}
