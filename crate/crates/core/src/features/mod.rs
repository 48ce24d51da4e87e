//! Spectral feature extraction.
//!
//! One 4096-sample (noise) segment becomes a 2049-dimensional feature
//! vector: the magnitudes of the non-redundant real-FFT bins, compressed as
//! `ln(1 + magnitude)`. Feature matrices stack one vector per segment.

pub mod fft;
mod io;

pub use io::{export_csv, read_adfm, write_adfm};

use std::sync::OnceLock;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Segment;
use crate::denoise::{self, DenoiseConfig};
use crate::error::{Error, Result};
use crate::{FEATURE_DIM, SEGMENT_LEN};

/// Whether features come from the extracted noise or the raw segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Wavelet noise residual feeds the FFT (the main pipeline).
    Noise,
    /// The segment itself feeds the FFT (the no-extraction baseline).
    Raw,
}

/// One segment's 2049 non-negative log-magnitude values plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    device_label: u16,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, device_label: u16) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(Error::shape(format!(
                "feature vector length {} is not {FEATURE_DIM}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "feature value {v} at bin {i} is not a non-negative finite number"
                )));
            }
        }
        Ok(FeatureVector {
            values,
            device_label,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn device_label(&self) -> u16 {
        self.device_label
    }
}

/// Feature vectors stacked one per row, with aligned labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    labels: Vec<u16>,
}

impl FeatureMatrix {
    pub fn from_vectors(vectors: Vec<FeatureVector>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyInput("no feature vectors".into()));
        }
        let mut data = Array2::zeros((vectors.len(), FEATURE_DIM));
        let mut labels = Vec::with_capacity(vectors.len());
        for (i, v) in vectors.into_iter().enumerate() {
            data.row_mut(i)
                .iter_mut()
                .zip(&v.values)
                .for_each(|(slot, &x)| *slot = x);
            labels.push(v.device_label);
        }
        Ok(FeatureMatrix { data, labels })
    }

    pub(crate) fn from_parts(data: Array2<f64>, labels: Vec<u16>) -> Result<Self> {
        if data.nrows() != labels.len() {
            return Err(Error::shape(format!(
                "{} rows vs {} labels",
                data.nrows(),
                labels.len()
            )));
        }
        if data.ncols() != FEATURE_DIM {
            return Err(Error::shape(format!(
                "feature dimension {} is not {FEATURE_DIM}",
                data.ncols()
            )));
        }
        Ok(FeatureMatrix { data, labels })
    }

    /// Vectors as rows: shape `(len, 2049)`.
    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        FEATURE_DIM
    }

    pub fn vector(&self, index: usize) -> ArrayView1<'_, f64> {
        self.data.row(index)
    }

    /// Max label + 1.
    pub fn class_count(&self) -> usize {
        self.labels
            .iter()
            .map(|&l| usize::from(l) + 1)
            .max()
            .unwrap_or(0)
    }

    /// Diagnostic reduction: all vectors summed into one global spectrum
    /// histogram. Not used for classification.
    pub fn summed_histogram(&self) -> Vec<f64> {
        let mut acc = vec![0.0; FEATURE_DIM];
        for row in self.data.rows() {
            for (slot, &v) in acc.iter_mut().zip(row.iter()) {
                *slot += v;
            }
        }
        acc
    }
}

static PLAN_4096: OnceLock<fft::Fft> = OnceLock::new();

/// Magnitudes of the 2049 non-redundant FFT bins of a 4096-sample segment.
pub fn rfft_mag(segment: &[f64]) -> Result<Vec<f64>> {
    if segment.len() != SEGMENT_LEN {
        return Err(Error::shape(format!(
            "segment length {} is not {SEGMENT_LEN}",
            segment.len()
        )));
    }
    if let Some(i) = segment.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite sample at index {i}")));
    }
    let plan = PLAN_4096.get_or_init(|| fft::Fft::new(SEGMENT_LEN));
    let mut re = segment.to_vec();
    let mut im = vec![0.0; SEGMENT_LEN];
    plan.forward(&mut re, &mut im);
    Ok((0..FEATURE_DIM)
        .map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt())
        .collect())
}

/// Log compression `ln(1 + v)`, elementwise. Order-preserving, maps 0 to 0.
pub fn lognorm(mags: &[f64]) -> Result<Vec<f64>> {
    mags.iter()
        .map(|&v| {
            if !v.is_finite() || v < 0.0 {
                Err(Error::Domain(format!(
                    "magnitude {v} is not a non-negative finite number"
                )))
            } else {
                Ok(v.ln_1p())
            }
        })
        .collect()
}

/// Full per-segment feature pipeline.
pub fn featurize(segment: &Segment, mode: FeatureMode, config: &DenoiseConfig) -> Result<FeatureVector> {
    let source = match mode {
        FeatureMode::Noise => denoise::extract_noise(segment.samples(), config)?,
        FeatureMode::Raw => denoise::passthrough(segment.samples()),
    };
    let values = lognorm(&rfft_mag(&source)?)?;
    FeatureVector::new(values, segment.device_label())
}

/// Featurizes every segment, order-preserving. Segments are processed in
/// parallel; each vector depends only on its own segment, so the result is
/// identical no matter how the work is scheduled.
pub fn build_matrix(
    segments: &[Segment],
    mode: FeatureMode,
    config: &DenoiseConfig,
) -> Result<FeatureMatrix> {
    if segments.is_empty() {
        return Err(Error::EmptyInput("no segments to featurize".into()));
    }
    let vectors: Vec<FeatureVector> = segments
        .par_iter()
        .map(|s| featurize(s, mode, config))
        .collect::<Result<_>>()?;
    FeatureMatrix::from_vectors(vectors)
}
