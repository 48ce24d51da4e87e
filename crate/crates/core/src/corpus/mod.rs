//! Recording ingestion, segmentation, and synthetic corpus generation.
//!
//! Recordings are cut into fixed 4096-sample segments at uniformly random
//! offsets; overlap is allowed, so any requested segment count can be drawn
//! from any sufficiently long recording. Labels always come from a manifest,
//! never from audio content.

pub mod manifest;
pub mod synth;
pub mod wav;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;
use crate::SEGMENT_LEN;

/// A labelled mono recording with samples in [-1, 1].
#[derive(Debug, Clone)]
pub struct Recording {
    samples: Vec<f64>,
    sample_rate: u32,
    device_label: u16,
    source_name: String,
}

impl Recording {
    /// Validates sample range and finiteness.
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        device_label: u16,
        source_name: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("recording has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        for (i, &s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::Numeric(format!("non-finite sample at index {i}")));
            }
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::Domain(format!(
                    "sample {s} at index {i} outside [-1, 1]"
                )));
            }
        }
        Ok(Recording {
            samples,
            sample_rate,
            device_label,
            source_name: source_name.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn device_label(&self) -> u16 {
        self.device_label
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }
}

/// A 4096-sample window cut from a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f64>,
    device_label: u16,
    origin_offset: usize,
}

impl Segment {
    pub fn new(samples: Vec<f64>, device_label: u16, origin_offset: usize) -> Result<Self> {
        if samples.len() != SEGMENT_LEN {
            return Err(Error::shape(format!(
                "segment length {} is not {SEGMENT_LEN}",
                samples.len()
            )));
        }
        Ok(Segment {
            samples,
            device_label,
            origin_offset,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn device_label(&self) -> u16 {
        self.device_label
    }

    pub fn origin_offset(&self) -> usize {
        self.origin_offset
    }
}

/// Shape of the synthetic corpus. Defaults reproduce the 18000-train /
/// 900-test segment totals of the nine-device protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub device_count: usize,
    pub train_segments_per_recording: usize,
    pub test_segments_per_recording: usize,
    pub recordings_per_device_train: usize,
    pub recordings_per_device_test: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            device_count: 9,
            train_segments_per_recording: 1000,
            test_segments_per_recording: 100,
            recordings_per_device_train: 2,
            recordings_per_device_test: 1,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.device_count == 0 {
            return Err(Error::config("device_count must be positive"));
        }
        if self.device_count > usize::from(u16::MAX) {
            return Err(Error::config("device_count exceeds the u16 label range"));
        }
        if self.train_segments_per_recording == 0
            || self.test_segments_per_recording == 0
            || self.recordings_per_device_train == 0
            || self.recordings_per_device_test == 0
        {
            return Err(Error::config("all corpus counts must be positive"));
        }
        Ok(())
    }

    /// Total train segments the spec yields downstream.
    pub fn train_total(&self) -> usize {
        self.device_count * self.recordings_per_device_train * self.train_segments_per_recording
    }

    /// Total test segments the spec yields downstream.
    pub fn test_total(&self) -> usize {
        self.device_count * self.recordings_per_device_test * self.test_segments_per_recording
    }
}

/// Loads a PCM16 WAV file as a recording. The device label comes from the
/// caller (manifest or label map), never from the file contents.
pub fn load_wav(path: &Path, device_label: u16) -> Result<Recording> {
    let wav = wav::read_wav(path)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Recording::new(wav.samples, wav.sample_rate, device_label, name)
}

/// Cuts `count` segments at uniformly random offsets (overlap permitted).
/// Identical `(recording, count, seed)` triples yield identical offsets.
pub fn segment_recording(rec: &Recording, count: usize, seed: u64) -> Result<Vec<Segment>> {
    if count == 0 {
        return Err(Error::EmptyInput("segment count must be at least 1".into()));
    }
    if rec.len() < SEGMENT_LEN {
        return Err(Error::TooShort {
            len: rec.len(),
            min: SEGMENT_LEN,
        });
    }
    let max_offset = rec.len() - SEGMENT_LEN;
    let mut rng = rng_from_seed(seed);
    let mut segments = Vec::with_capacity(count);
    for _ in 0..count {
        let offset = rng.random_range(0..=max_offset);
        segments.push(Segment {
            samples: rec.samples[offset..offset + SEGMENT_LEN].to_vec(),
            device_label: rec.device_label,
            origin_offset: offset,
        });
    }
    Ok(segments)
}
