// Dev-only calibration harness: prints accuracies, cost curves, and
// timings on a synthetic corpus so corpus constants can be tuned.

use std::time::Instant;

use deviceprint::corpus::manifest::{Manifest, Role};
use deviceprint::corpus::synth::synth_corpus;
use deviceprint::corpus::CorpusSpec;
use deviceprint::features::FeatureMode;
use deviceprint::learn::{averaged, mlp, softmax, Model, TrainConfig};
use deviceprint_cli::commands::evaluate_features;
use deviceprint_cli::config::ExperimentConfig;
use deviceprint_cli::pipeline;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scale: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);
    let mlp_epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(10);
    let mlp_lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.1);

    let spec = CorpusSpec {
        train_segments_per_recording: ((1000.0 * scale) as usize).max(10),
        test_segments_per_recording: ((100.0 * scale) as usize).max(10),
        seed,
        ..CorpusSpec::default()
    };
    let k = spec.device_count;
    println!(
        "corpus: {} devices, {} train/rec, {} test/rec, seed {}",
        k, spec.train_segments_per_recording, spec.test_segments_per_recording, seed
    );

    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let manifest_path = synth_corpus(&spec, dir.path()).unwrap();
    println!("synth: {:.1}s", t.elapsed().as_secs_f64());
    let manifest = Manifest::read(&manifest_path).unwrap();

    let config = ExperimentConfig {
        corpus: spec.clone(),
        ..ExperimentConfig::default()
    };

    let mut results: Vec<(String, f64)> = Vec::new();
    let mut vote_model: Option<Model> = None;

    for mode in [FeatureMode::Noise, FeatureMode::Raw] {
        let t = Instant::now();
        let train = pipeline::build_features(
            &manifest_path,
            &manifest,
            Role::Train,
            spec.train_segments_per_recording,
            seed,
            0,
            mode,
            &config.denoise,
        )
        .unwrap();
        let test = pipeline::build_features(
            &manifest_path,
            &manifest,
            Role::Test,
            spec.test_segments_per_recording,
            seed,
            0,
            mode,
            &config.denoise,
        )
        .unwrap();
        println!("featurize {mode:?}: {:.1}s", t.elapsed().as_secs_f64());

        // Per-device band profiles: mean feature per 128-bin band, and the
        // worst within-device band std, to see where the signal lives.
        {
            let k_bands = 16;
            let band = 2049 / k_bands;
            let mut means = vec![vec![0.0f64; k_bands]; k];
            let mut counts = vec![0usize; k];
            for i in 0..train.len() {
                let d = train.labels()[i] as usize;
                counts[d] += 1;
                let row = train.vector(i);
                for b in 0..k_bands {
                    let lo = b * band;
                    let hi = (lo + band).min(2049);
                    let m: f64 = row.iter().skip(lo).take(hi - lo).sum::<f64>() / (hi - lo) as f64;
                    means[d][b] += m;
                }
            }
            for d in 0..k {
                for b in 0..k_bands {
                    means[d][b] /= counts[d] as f64;
                }
            }
            let mut stds = vec![0.0f64; k_bands];
            for i in 0..train.len() {
                let d = train.labels()[i] as usize;
                let row = train.vector(i);
                for b in 0..k_bands {
                    let lo = b * band;
                    let hi = (lo + band).min(2049);
                    let m: f64 = row.iter().skip(lo).take(hi - lo).sum::<f64>() / (hi - lo) as f64;
                    stds[b] += (m - means[d][b]).powi(2);
                }
            }
            println!("  band profiles (x1000), rows=devices, cols=128-bin bands:");
            for d in 0..k {
                let cells: Vec<String> = means[d].iter().map(|v| format!("{:5.0}", v * 1000.0)).collect();
                println!("    d{d}: {}", cells.join(" "));
            }
            let cells: Vec<String> = stds
                .iter()
                .map(|v| format!("{:5.0}", (v / train.len() as f64).sqrt() * 1000.0))
                .collect();
            println!("    sd: {}", cells.join(" "));
        }

        // Feature magnitude diagnostics.
        let mut max_norm2 = 0.0f64;
        let mut mean_abs = 0.0f64;
        for i in 0..train.len() {
            let row = train.vector(i);
            let n2: f64 = row.iter().map(|v| v * v).sum();
            max_norm2 = max_norm2.max(n2);
            mean_abs += row.iter().map(|v| v.abs()).sum::<f64>();
        }
        mean_abs /= (train.len() * train.dim()) as f64;
        println!("  features: max ||x||^2 = {max_norm2:.2}, mean |x| = {mean_abs:.4}");

        // Softmax, full batch, default lr 0.5.
        let t = Instant::now();
        let sm_config = TrainConfig { epochs: 300, ..TrainConfig::for_softmax() };
        let (sm, costs) = softmax::train(train.data(), train.labels(), k, &sm_config).unwrap();
        let rises = costs.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
        let report = evaluate_features(&Model::Softmax(sm), &test, &config).unwrap();
        println!(
            "  softmax/{mode:?}: acc={:.4} J0={:.4} Jend={:.4} rises={rises} ({:.1}s)",
            report.accuracy,
            costs[0],
            costs.last().unwrap(),
            t.elapsed().as_secs_f64()
        );
        results.push((format!("softmax/{mode:?}"), report.accuracy));

        // MLP-3 at several learning rates.
        let sizes = config.layer_sizes(train.dim(), k, 3);
        let mut model = None;
        for lr in [mlp_lr * 0.5, mlp_lr, mlp_lr * 2.0] {
            let t = Instant::now();
            let nn_config = TrainConfig {
                epochs: mlp_epochs,
                learning_rate: lr,
                ..TrainConfig::default()
            };
            let m = mlp::train(train.data(), train.labels(), &sizes, &nn_config).unwrap();
            let loss_after = mlp::batch_loss(&m, train.data(), train.labels(), deviceprint::learn::MlpLoss::SquaredError).unwrap();
            let m = Model::Mlp(m);
            let report = evaluate_features(&m, &test, &config).unwrap();
            let train_report = evaluate_features(&m, &train, &config).unwrap();
            println!(
                "  mlp-3/{mode:?} lr={lr}: acc={:.4} train_acc={:.4} train_loss={loss_after:.4} ({:.1}s, {} epochs)",
                report.accuracy,
                train_report.accuracy,
                t.elapsed().as_secs_f64(),
                mlp_epochs
            );
            results.push((format!("mlp-3/{mode:?}/lr{lr}"), report.accuracy));
            if lr == mlp_lr {
                model = Some(m);
            }
        }
        let model = model.unwrap();
        if mode == FeatureMode::Noise {
            vote_model = Some(model);

            // Averaged MLP-3 on noise only.
            let t = Instant::now();
            let model = averaged::train(
                train.data(),
                train.labels(),
                config.chunk_count,
                &sizes,
                &TrainConfig {
                    epochs: mlp_epochs,
                    learning_rate: mlp_lr,
                    ..TrainConfig::default()
                },
            )
            .unwrap();
            let report = evaluate_features(&Model::Averaged(model), &test, &config).unwrap();
            println!(
                "  mlp-averaged-3/noise: acc={:.4} ({:.1}s)",
                report.accuracy,
                t.elapsed().as_secs_f64()
            );
            results.push(("mlp-averaged-3/noise".into(), report.accuracy));
        }
    }

    let vote_model = vote_model.unwrap();
    let t = Instant::now();
    for voters in [1usize, 3, 5] {
        let outcome = pipeline::vote_eval(
            &vote_model,
            &manifest_path,
            &manifest,
            spec.test_segments_per_recording,
            seed,
            voters,
            FeatureMode::Noise,
            &config.denoise,
        )
        .unwrap();
        println!("  vote-{voters}/noise: acc={:.4}", outcome.accuracy);
        results.push((format!("vote-{voters}"), outcome.accuracy));
    }
    println!("voting: {:.1}s", t.elapsed().as_secs_f64());

    println!("\nsummary:");
    for (name, acc) in &results {
        println!("  {name}: {acc:.4}");
    }
}
