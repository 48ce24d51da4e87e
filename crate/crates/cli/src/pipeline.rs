//! Composition of the corpus, feature, and model layers.
//!
//! Segment draws are keyed on `(corpus seed, manifest entry index, draw
//! index)`: draw 0 is the canonical train/test split, and voting uses draws
//! `0..V`, so a single voter reproduces the plain evaluation exactly.

use std::path::Path;

use deviceprint::corpus::manifest::{Manifest, ManifestEntry, Role};
use deviceprint::corpus::{load_wav, segment_recording, Segment};
use deviceprint::denoise::DenoiseConfig;
use deviceprint::features::{build_matrix, FeatureMatrix, FeatureMode};
use deviceprint::learn::{argmax, vote, Model};
use deviceprint::seeding::derive_seed;
use deviceprint::{Error, Result};

/// Seed-path tag for segment draws.
const TAG_SEGMENTS: u64 = 101;

/// Deterministic segment seed for one manifest entry and draw index.
fn segment_seed(base_seed: u64, entry_index: usize, draw: u64) -> u64 {
    derive_seed(base_seed, &[TAG_SEGMENTS, entry_index as u64, draw])
}

/// Manifest entries of one role, keeping their global manifest indices so
/// seed derivation is stable against the other role's entries.
fn role_entries(manifest: &Manifest, role: Role) -> Vec<(usize, &ManifestEntry)> {
    manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.role == role)
        .collect()
}

/// Draws `count` segments per recording of the given role.
pub fn collect_segments(
    manifest_path: &Path,
    manifest: &Manifest,
    role: Role,
    count: usize,
    base_seed: u64,
    draw: u64,
) -> Result<Vec<Segment>> {
    let entries = role_entries(manifest, role);
    if entries.is_empty() {
        return Err(Error::EmptyInput(format!("manifest has no {role} entries")));
    }
    let mut segments = Vec::with_capacity(entries.len() * count);
    for (index, entry) in entries {
        let recording = load_wav(&Manifest::resolve(manifest_path, entry), entry.device_label)
            .map_err(|e| {
                Error::Io(std::io::Error::other(format!(
                    "{}: {e}",
                    entry.relative_path.display()
                )))
            })?;
        segments.extend(segment_recording(
            &recording,
            count,
            segment_seed(base_seed, index, draw),
        )?);
    }
    Ok(segments)
}

/// Featurizes one role of the corpus, processing one recording at a time.
pub fn build_features(
    manifest_path: &Path,
    manifest: &Manifest,
    role: Role,
    count: usize,
    base_seed: u64,
    draw: u64,
    mode: FeatureMode,
    denoise: &DenoiseConfig,
) -> Result<FeatureMatrix> {
    let segments = collect_segments(manifest_path, manifest, role, count, base_seed, draw)?;
    build_matrix(&segments, mode, denoise)
}

/// Probability-style output of a feature-space model. The CNN consumes raw
/// windows, not feature vectors, and is rejected here.
pub fn predict_probs(model: &Model, features: &[f64]) -> Result<Vec<f64>> {
    match model {
        Model::Softmax(m) => m.predict(features),
        Model::Mlp(m) => m.forward(features),
        Model::Averaged(m) => m.forward(features),
        Model::Cnn(_) => Err(Error::Config(
            "CNN models consume raw segments; evaluate them against a manifest".into(),
        )),
    }
}

/// Argmax class of a feature-space model.
pub fn predict_class(model: &Model, features: &[f64]) -> Result<usize> {
    Ok(argmax(&predict_probs(model, features)?))
}

/// Result of a voting evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    pub accuracy: f64,
    pub truths: Vec<u16>,
    pub predictions: Vec<usize>,
}

/// Voting evaluation over the test recordings.
///
/// Each test recording contributes `count` trials; for trial `t`, the `V`
/// voters classify the `t`-th segment of `V` independently drawn segment
/// sets, and the majority vote decides. Draw `v` of entry `i` uses the same
/// seed path as the canonical featurization, so `V = 1` reproduces the
/// plain test accuracy exactly.
pub fn vote_eval(
    model: &Model,
    manifest_path: &Path,
    manifest: &Manifest,
    count: usize,
    base_seed: u64,
    voters: usize,
    mode: FeatureMode,
    denoise: &DenoiseConfig,
) -> Result<VoteOutcome> {
    if voters == 0 {
        return Err(Error::Config("voters must be at least 1".into()));
    }
    let entries = role_entries(manifest, Role::Test);
    if entries.is_empty() {
        return Err(Error::EmptyInput("manifest has no test entries".into()));
    }

    let mut truths = Vec::new();
    let mut predictions = Vec::new();
    for (index, entry) in entries {
        let recording = load_wav(&Manifest::resolve(manifest_path, entry), entry.device_label)?;

        // One probability row per (voter, trial).
        let mut per_voter: Vec<Vec<Vec<f64>>> = Vec::with_capacity(voters);
        for v in 0..voters {
            let segments =
                segment_recording(&recording, count, segment_seed(base_seed, index, v as u64))?;
            let probs = match model {
                Model::Cnn(m) => segments
                    .iter()
                    .map(|s| m.predict(s.samples()))
                    .collect::<Result<Vec<_>>>()?,
                _ => {
                    let matrix = build_matrix(&segments, mode, denoise)?;
                    (0..matrix.len())
                        .map(|i| {
                            predict_probs(
                                model,
                                matrix.vector(i).as_slice().expect("contiguous row"),
                            )
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            per_voter.push(probs);
        }

        for t in 0..count {
            let ballot: Vec<Vec<f64>> =
                (0..voters).map(|v| per_voter[v][t].clone()).collect();
            truths.push(entry.device_label);
            predictions.push(vote(&ballot)?);
        }
    }

    let correct = truths
        .iter()
        .zip(&predictions)
        .filter(|(&t, &p)| usize::from(t) == p)
        .count();
    Ok(VoteOutcome {
        accuracy: correct as f64 / truths.len() as f64,
        truths,
        predictions,
    })
}
