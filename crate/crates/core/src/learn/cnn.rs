//! Minimal 1-D convolutional network over raw time-domain segments.
//!
//! Fixed standard architecture: conv(16 filters, width 9, stride 4) -> ReLU
//! -> max-pool(4) -> conv(32 filters, width 9, stride 2) -> ReLU ->
//! max-pool(4) -> dense -> softmax. Convolutions are "valid" (no padding),
//! pooling windows do not overlap and drop any remainder. Trained with
//! cross-entropy by mini-batch SGD; no feature extraction is applied first.

use ndarray::{Array1, Array2, Array3, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Segment;
use crate::error::{Error, Result};
use crate::learn::{check_labels, TrainConfig, GRAD_CHUNK};
use crate::seeding::rng_from_seed;
use crate::SEGMENT_LEN;

/// One convolution stage followed by ReLU and max-pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub width: usize,
    pub stride: usize,
    pub pool: usize,
}

/// Architecture description, resolvable to concrete layer shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnArch {
    pub input_len: usize,
    pub class_count: usize,
    pub stages: Vec<ConvSpec>,
}

/// Shape of one stage's outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShape {
    pub conv_len: usize,
    pub pooled_len: usize,
    pub channels: usize,
}

impl CnnArch {
    /// The fixed architecture used on 4096-sample segments.
    pub fn standard(class_count: usize) -> CnnArch {
        CnnArch {
            input_len: SEGMENT_LEN,
            class_count,
            stages: vec![
                ConvSpec {
                    filters: 16,
                    width: 9,
                    stride: 4,
                    pool: 4,
                },
                ConvSpec {
                    filters: 32,
                    width: 9,
                    stride: 2,
                    pool: 4,
                },
            ],
        }
    }

    /// Resolves every stage's output shape; errors if any stage runs out of
    /// samples.
    pub fn shape_trace(&self) -> Result<Vec<StageShape>> {
        if self.class_count < 2 {
            return Err(Error::config("CNN needs at least two classes"));
        }
        if self.stages.is_empty() {
            return Err(Error::config("CNN needs at least one conv stage"));
        }
        let mut len = self.input_len;
        let mut shapes = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            if s.filters == 0 || s.width == 0 || s.stride == 0 || s.pool == 0 {
                return Err(Error::config(format!("stage {i}: zero-sized parameter")));
            }
            if len < s.width {
                return Err(Error::shape(format!(
                    "stage {i}: input length {len} shorter than filter width {}",
                    s.width
                )));
            }
            let conv_len = (len - s.width) / s.stride + 1;
            let pooled_len = conv_len / s.pool;
            if pooled_len == 0 {
                return Err(Error::shape(format!(
                    "stage {i}: pooling {} exhausts {conv_len} outputs",
                    s.pool
                )));
            }
            shapes.push(StageShape {
                conv_len,
                pooled_len,
                channels: s.filters,
            });
            len = pooled_len;
        }
        Ok(shapes)
    }

    /// Flattened dimension feeding the dense layer.
    pub fn flat_dim(&self) -> Result<usize> {
        let shapes = self.shape_trace()?;
        let last = shapes.last().unwrap();
        Ok(last.channels * last.pooled_len)
    }
}

/// Filter bank of one stage: `(filters, in_channels, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStage {
    pub filters: Array3<f64>,
    pub biases: Array1<f64>,
    pub spec: ConvSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    arch: CnnArch,
    stages: Vec<ConvStage>,
    dense_weights: Array2<f64>, // K x flat
    dense_biases: Array1<f64>,
}

impl CnnModel {
    /// Seeded Glorot initialization; biases start at zero.
    pub fn init(arch: CnnArch, rng: &mut ChaCha8Rng) -> Result<Self> {
        let flat = arch.flat_dim()?;
        let mut in_channels = 1;
        let mut stages = Vec::with_capacity(arch.stages.len());
        for spec in &arch.stages {
            let fan_in = in_channels * spec.width;
            let fan_out = spec.filters * spec.width;
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let filters = Array3::from_shape_fn((spec.filters, in_channels, spec.width), |_| {
                rng.random_range(-r..r)
            });
            stages.push(ConvStage {
                filters,
                biases: Array1::zeros(spec.filters),
                spec: *spec,
            });
            in_channels = spec.filters;
        }
        let r = (6.0 / (flat + arch.class_count) as f64).sqrt();
        let dense_weights =
            Array2::from_shape_fn((arch.class_count, flat), |_| rng.random_range(-r..r));
        let dense_biases = Array1::zeros(arch.class_count);
        Ok(CnnModel {
            arch,
            stages,
            dense_weights,
            dense_biases,
        })
    }

    /// All-zero parameters: the output is uniform over classes.
    pub fn zeros(arch: CnnArch) -> Result<Self> {
        let flat = arch.flat_dim()?;
        let mut in_channels = 1;
        let mut stages = Vec::with_capacity(arch.stages.len());
        for spec in &arch.stages {
            stages.push(ConvStage {
                filters: Array3::zeros((spec.filters, in_channels, spec.width)),
                biases: Array1::zeros(spec.filters),
                spec: *spec,
            });
            in_channels = spec.filters;
        }
        Ok(CnnModel {
            arch: arch.clone(),
            stages,
            dense_weights: Array2::zeros((arch.class_count, flat)),
            dense_biases: Array1::zeros(arch.class_count),
        })
    }

    pub fn from_parts(
        arch: CnnArch,
        stages: Vec<ConvStage>,
        dense_weights: Array2<f64>,
        dense_biases: Array1<f64>,
    ) -> Result<Self> {
        let flat = arch.flat_dim()?;
        if stages.len() != arch.stages.len() {
            return Err(Error::shape("stage count mismatch"));
        }
        let mut in_channels = 1;
        for (i, (stage, spec)) in stages.iter().zip(&arch.stages).enumerate() {
            if stage.spec != *spec
                || stage.filters.dim() != (spec.filters, in_channels, spec.width)
                || stage.biases.len() != spec.filters
            {
                return Err(Error::shape(format!("stage {i} dimensions mismatch")));
            }
            in_channels = spec.filters;
        }
        if dense_weights.dim() != (arch.class_count, flat)
            || dense_biases.len() != arch.class_count
        {
            return Err(Error::shape("dense layer dimensions mismatch"));
        }
        Ok(CnnModel {
            arch,
            stages,
            dense_weights,
            dense_biases,
        })
    }

    pub fn arch(&self) -> &CnnArch {
        &self.arch
    }

    pub fn stages(&self) -> &[ConvStage] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [ConvStage] {
        &mut self.stages
    }

    pub fn dense_weights(&self) -> &Array2<f64> {
        &self.dense_weights
    }

    pub fn dense_weights_mut(&mut self) -> &mut Array2<f64> {
        &mut self.dense_weights
    }

    pub fn dense_biases(&self) -> &Array1<f64> {
        &self.dense_biases
    }

    pub fn class_count(&self) -> usize {
        self.arch.class_count
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len
    }

    /// Softmax class probabilities for one raw sample window.
    pub fn predict(&self, sample: &[f64]) -> Result<Vec<f64>> {
        if sample.len() != self.arch.input_len {
            return Err(Error::shape(format!(
                "input length {} vs network input {}",
                sample.len(),
                self.arch.input_len
            )));
        }
        let trace = self.forward_trace(sample);
        Ok(trace.probabilities)
    }

    /// Argmax prediction; ties go to the lowest class index.
    pub fn predict_class(&self, sample: &[f64]) -> Result<usize> {
        Ok(crate::learn::argmax(&self.predict(sample)?))
    }

    fn forward_trace(&self, sample: &[f64]) -> ForwardTrace {
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(self.stages.len() + 1);
        let mut relu_outs: Vec<Array2<f64>> = Vec::with_capacity(self.stages.len());
        let mut pool_idx: Vec<Array2<usize>> = Vec::with_capacity(self.stages.len());

        let mut current =
            Array2::from_shape_vec((1, sample.len()), sample.to_vec()).expect("row shape");
        for stage in &self.stages {
            inputs.push(current.clone());
            let (in_ch, in_len) = current.dim();
            let spec = stage.spec;
            let conv_len = (in_len - spec.width) / spec.stride + 1;

            // Convolution + ReLU.
            let mut relu = Array2::<f64>::zeros((spec.filters, conv_len));
            for f in 0..spec.filters {
                for p in 0..conv_len {
                    let base = p * spec.stride;
                    let mut z = stage.biases[f];
                    for c in 0..in_ch {
                        for w in 0..spec.width {
                            z += stage.filters[(f, c, w)] * current[(c, base + w)];
                        }
                    }
                    relu[(f, p)] = z.max(0.0);
                }
            }

            // Non-overlapping max pool; first maximum wins on ties.
            let pooled_len = conv_len / spec.pool;
            let mut pooled = Array2::zeros((spec.filters, pooled_len));
            let mut idx = Array2::<usize>::zeros((spec.filters, pooled_len));
            for f in 0..spec.filters {
                for p in 0..pooled_len {
                    let start = p * spec.pool;
                    let mut best = start;
                    for q in start + 1..start + spec.pool {
                        if relu[(f, q)] > relu[(f, best)] {
                            best = q;
                        }
                    }
                    pooled[(f, p)] = relu[(f, best)];
                    idx[(f, p)] = best;
                }
            }
            relu_outs.push(relu);
            pool_idx.push(idx);
            current = pooled;
        }

        // Flatten channel-major and apply the dense layer.
        let flat: Vec<f64> = current.iter().cloned().collect();
        let mut logits: Vec<f64> = (0..self.arch.class_count)
            .map(|k| {
                let mut z = self.dense_biases[k];
                for (j, &v) in flat.iter().enumerate() {
                    z += self.dense_weights[(k, j)] * v;
                }
                z
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for z in logits.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        for z in logits.iter_mut() {
            *z /= sum;
        }

        ForwardTrace {
            inputs,
            relu_outs,
            pool_idx,
            flat,
            flat_shape: current.dim(),
            probabilities: logits,
        }
    }
}

struct ForwardTrace {
    inputs: Vec<Array2<f64>>,
    relu_outs: Vec<Array2<f64>>,
    pool_idx: Vec<Array2<usize>>,
    flat: Vec<f64>,
    flat_shape: (usize, usize),
    probabilities: Vec<f64>,
}

struct CnnGrads {
    stages: Vec<(Array3<f64>, Array1<f64>)>,
    dense_w: Array2<f64>,
    dense_b: Array1<f64>,
}

impl CnnGrads {
    fn zeros(model: &CnnModel) -> CnnGrads {
        CnnGrads {
            stages: model
                .stages
                .iter()
                .map(|s| {
                    (
                        Array3::zeros(s.filters.dim()),
                        Array1::zeros(s.biases.len()),
                    )
                })
                .collect(),
            dense_w: Array2::zeros(model.dense_weights.dim()),
            dense_b: Array1::zeros(model.dense_biases.len()),
        }
    }

    fn add(&mut self, other: CnnGrads) {
        for ((w, b), (ow, ob)) in self.stages.iter_mut().zip(other.stages) {
            *w += &ow;
            *b += &ob;
        }
        self.dense_w += &other.dense_w;
        self.dense_b += &other.dense_b;
    }
}

/// Cross-entropy gradient of one sample, accumulated into `grads`.
fn backward_sample(model: &CnnModel, sample: &[f64], label: u16, grads: &mut CnnGrads) -> f64 {
    let trace = model.forward_trace(sample);
    let y = usize::from(label);
    let loss = -trace.probabilities[y].max(1e-300).ln();

    // d loss / d logits = p - onehot.
    let mut dlogits = trace.probabilities.clone();
    dlogits[y] -= 1.0;

    for (k, &dz) in dlogits.iter().enumerate() {
        grads.dense_b[k] += dz;
        for (j, &v) in trace.flat.iter().enumerate() {
            grads.dense_w[(k, j)] += dz * v;
        }
    }

    let mut dflat = vec![0.0; trace.flat.len()];
    for (k, &dz) in dlogits.iter().enumerate() {
        for (j, slot) in dflat.iter_mut().enumerate() {
            *slot += dz * model.dense_weights[(k, j)];
        }
    }
    let mut dcurrent =
        Array2::from_shape_vec(trace.flat_shape, dflat).expect("flat gradient shape");

    for (l, stage) in model.stages.iter().enumerate().rev() {
        let spec = stage.spec;
        let relu = &trace.relu_outs[l];
        let input = &trace.inputs[l];
        let (in_ch, _) = input.dim();
        let conv_len = relu.ncols();

        // Un-pool: gradient flows to the recorded argmax, through the ReLU.
        let mut dz = Array2::<f64>::zeros((spec.filters, conv_len));
        for f in 0..spec.filters {
            for p in 0..dcurrent.ncols() {
                let best = trace.pool_idx[l][(f, p)];
                if relu[(f, best)] > 0.0 {
                    dz[(f, best)] += dcurrent[(f, p)];
                }
            }
        }

        let needs_dinput = l > 0;
        let mut dinput = Array2::zeros(input.dim());
        let (gw, gb) = &mut grads.stages[l];
        for f in 0..spec.filters {
            for p in 0..conv_len {
                let g = dz[(f, p)];
                if g == 0.0 {
                    continue;
                }
                gb[f] += g;
                let base = p * spec.stride;
                for c in 0..in_ch {
                    for w in 0..spec.width {
                        gw[(f, c, w)] += g * input[(c, base + w)];
                        if needs_dinput {
                            dinput[(c, base + w)] += g * stage.filters[(f, c, w)];
                        }
                    }
                }
            }
        }
        dcurrent = dinput;
    }
    loss
}

/// Mean cross-entropy over a labelled batch of raw windows.
pub fn batch_loss(model: &CnnModel, data: ArrayView2<'_, f64>, labels: &[u16]) -> Result<f64> {
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    check_labels(labels, model.class_count())?;
    let mut total = 0.0;
    for (row, &label) in data.rows().into_iter().zip(labels) {
        let p = model.predict(row.as_slice().expect("contiguous row"))?;
        total -= p[usize::from(label)].max(1e-300).ln();
    }
    Ok(total / data.nrows() as f64)
}

fn batch_grads(
    model: &CnnModel,
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    batch: &[usize],
) -> CnnGrads {
    let mut parts: Vec<CnnGrads> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = CnnGrads::zeros(model);
            for &i in chunk {
                backward_sample(
                    model,
                    data.row(i).as_slice().expect("contiguous row"),
                    labels[i],
                    &mut grads,
                );
            }
            grads
        })
        .collect();
    let mut total = parts.remove(0);
    for part in parts {
        total.add(part);
    }
    total
}

/// Mini-batch SGD with cross-entropy on raw time-domain windows.
pub fn train(
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    arch: CnnArch,
    config: &TrainConfig,
) -> Result<CnnModel> {
    config.validate()?;
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("no training data".into()));
    }
    if data.ncols() != arch.input_len {
        return Err(Error::shape(format!(
            "window length {} vs network input {}",
            data.ncols(),
            arch.input_len
        )));
    }
    check_labels(labels, arch.class_count)?;
    if labels.len() != data.nrows() {
        return Err(Error::shape(format!(
            "{} rows vs {} labels",
            data.nrows(),
            labels.len()
        )));
    }

    let mut rng = rng_from_seed(config.seed);
    let mut model = CnnModel::init(arch, &mut rng)?;
    let mut indices: Vec<usize> = (0..data.nrows()).collect();
    for _ in 0..config.epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(config.batch_size) {
            let grads = batch_grads(&model, data, labels, batch);
            let scale = config.learning_rate / batch.len() as f64;
            for (stage, (gw, gb)) in model.stages.iter_mut().zip(&grads.stages) {
                stage.filters.scaled_add(-scale, gw);
                stage.biases.scaled_add(-scale, gb);
            }
            model.dense_weights.scaled_add(-scale, &grads.dense_w);
            model.dense_biases.scaled_add(-scale, &grads.dense_b);
        }
    }
    Ok(model)
}

/// Stacks segments into the raw sample matrix the CNN consumes.
pub fn segment_matrix(segments: &[Segment]) -> Result<(Array2<f64>, Vec<u16>)> {
    if segments.is_empty() {
        return Err(Error::EmptyInput("no segments".into()));
    }
    let mut data = Array2::zeros((segments.len(), SEGMENT_LEN));
    let mut labels = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        data.row_mut(i)
            .iter_mut()
            .zip(seg.samples())
            .for_each(|(slot, &v)| *slot = v);
        labels.push(seg.device_label());
    }
    Ok((data, labels))
}
