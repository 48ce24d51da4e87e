//! Multilayer perceptron trained by backpropagation.
//!
//! Every node applies a sigmoid, including the output layer; prediction is
//! the argmax of the output vector. The training objective is the mean of
//! the per-sample squared error against one-hot targets
//! (`0.5 * sum (d - y)^2`); binary cross-entropy is available as a switch.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learn::{check_labels, TrainConfig, GRAD_CHUNK};
use crate::seeding::rng_from_seed;

/// Fully connected layer: `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Layer {
    /// Glorot-uniform weights in `[-r, r]`, `r = sqrt(6 / (fan_in + fan_out))`,
    /// filled in row-major order from the shared generator; zero biases.
    pub(crate) fn glorot(fan_out: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Layer {
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-r..r));
        Layer {
            weights,
            biases: Array1::zeros(fan_out),
        }
    }

    #[cfg(test)]
    pub(crate) fn zeros(fan_out: usize, fan_in: usize) -> Layer {
        Layer {
            weights: Array2::zeros((fan_out, fan_in)),
            biases: Array1::zeros(fan_out),
        }
    }

    /// `sigmoid(a W^T + b)` for a batch of rows.
    pub(crate) fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weights.t());
        for mut row in z.rows_mut() {
            row += &self.biases.view();
        }
        z.mapv_inplace(sigmoid);
        z
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlpLoss {
    /// `0.5 * sum_i (d_i - y_i)^2` against the one-hot target.
    #[default]
    SquaredError,
    /// Summed binary cross-entropy over the sigmoid outputs.
    CrossEntropy,
}

/// Feedforward network of sigmoid layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    layer_sizes: Vec<usize>,
}

impl MlpModel {
    /// Builds a model from explicit layers, checking the dimension chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("a network needs at least one layer"));
        }
        let mut layer_sizes = vec![layers[0].weights.ncols()];
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.ncols() != layer_sizes[i] {
                return Err(Error::shape(format!(
                    "layer {i} expects {} inputs, previous layer provides {}",
                    layer.weights.ncols(),
                    layer_sizes[i]
                )));
            }
            if layer.weights.nrows() != layer.biases.len() {
                return Err(Error::shape(format!(
                    "layer {i}: {} weight rows vs {} biases",
                    layer.weights.nrows(),
                    layer.biases.len()
                )));
            }
            layer_sizes.push(layer.weights.nrows());
        }
        Ok(MlpModel {
            layers,
            layer_sizes,
        })
    }

    /// Seeded Glorot initialization for the given size chain.
    pub fn init(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer::glorot(w[1], w[0], rng))
            .collect();
        Ok(MlpModel {
            layers,
            layer_sizes: layer_sizes.to_vec(),
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Output vector in (0,1)^K.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input dimension {} vs network input {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut a = x.to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; layer.biases.len()];
            for (o, slot) in next.iter_mut().enumerate() {
                let mut z = layer.biases[o];
                for (i, &ai) in a.iter().enumerate() {
                    z += layer.weights[(o, i)] * ai;
                }
                *slot = sigmoid(z);
            }
            a = next;
        }
        Ok(a)
    }

    /// Argmax prediction; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::learn::argmax(&self.forward(x)?))
    }

    /// Activations for every layer: `out[0]` is the input batch itself.
    fn activations(&self, input: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_owned());
        for layer in &self.layers {
            let next = layer.forward_batch(acts.last().unwrap().view());
            acts.push(next);
        }
        acts
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 3 || layer_sizes.len() > 5 {
        return Err(Error::config(format!(
            "{} hidden layers; the explored range is 1 to 3",
            layer_sizes.len().saturating_sub(2)
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::config("layer sizes must be positive"));
    }
    Ok(())
}

pub(crate) fn one_hot(labels: &[u16], class_count: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), class_count));
    for (i, &l) in labels.iter().enumerate() {
        y[(i, usize::from(l))] = 1.0;
    }
    y
}

/// Per-bin affine standardization fitted on the training data.
///
/// Glorot initialization assumes roughly unit-scale, zero-mean inputs;
/// log-magnitude spectra are non-negative and often small, which parks a
/// sigmoid network on its constant-output plateau. Training therefore runs
/// in standardized coordinates, and the transform is folded into the first
/// layer afterwards so the produced model is still a plain sigmoid chain
/// over the raw feature vector.
pub(crate) struct Standardizer {
    mean: Array1<f64>,
    inv_std: Array1<f64>,
}

impl Standardizer {
    pub(crate) fn fit(data: ArrayView2<'_, f64>) -> Standardizer {
        let m = data.nrows().max(1) as f64;
        let mean = data.sum_axis(Axis(0)) / m;
        let mut var = Array1::<f64>::zeros(data.ncols());
        for row in data.rows() {
            for (slot, (&x, &mu)) in var.iter_mut().zip(row.iter().zip(&mean)) {
                *slot += (x - mu) * (x - mu);
            }
        }
        let inv_std = var.mapv(|v| 1.0 / (v / m).sqrt().max(1e-6));
        Standardizer { mean, inv_std }
    }

    pub(crate) fn apply(&self, data: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            for ((slot, &mu), &is) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *slot = (*slot - mu) * is;
            }
        }
        out
    }

    /// The standardizer restricted to a contiguous span of bins, for layers
    /// that consume an input chunk.
    pub(crate) fn slice(&self, start: usize, len: usize) -> Standardizer {
        Standardizer {
            mean: self.mean.slice(ndarray::s![start..start + len]).to_owned(),
            inv_std: self
                .inv_std
                .slice(ndarray::s![start..start + len])
                .to_owned(),
        }
    }

    /// Rewrites a first layer trained on standardized inputs into the
    /// equivalent layer over raw inputs:
    /// `W(x - mu) * inv_std + b  ==  (W * inv_std) x + (b - W (mu * inv_std))`.
    pub(crate) fn fold_into(&self, layer: &mut Layer) {
        let shift: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.inv_std)
            .map(|(&mu, &is)| mu * is)
            .collect();
        for o in 0..layer.weights.nrows() {
            let mut offset = 0.0;
            for i in 0..layer.weights.ncols() {
                offset += layer.weights[(o, i)] * shift[i];
                layer.weights[(o, i)] *= self.inv_std[i];
            }
            layer.biases[o] -= offset;
        }
    }
}

/// Squared error of Eq-style form: `0.5 * sum_i (d_i - y_i)^2`.
pub fn mlp_error(target: &[f64], output: &[f64]) -> Result<f64> {
    if target.len() != output.len() {
        return Err(Error::shape(format!(
            "target length {} vs output length {}",
            target.len(),
            output.len()
        )));
    }
    Ok(0.5
        * target
            .iter()
            .zip(output)
            .map(|(d, y)| (d - y) * (d - y))
            .sum::<f64>())
}

fn sample_loss(loss: MlpLoss, target: &Array2<f64>, output: &Array2<f64>) -> f64 {
    match loss {
        MlpLoss::SquaredError => {
            0.5 * target
                .iter()
                .zip(output.iter())
                .map(|(d, y)| (d - y) * (d - y))
                .sum::<f64>()
        }
        MlpLoss::CrossEntropy => target
            .iter()
            .zip(output.iter())
            .map(|(d, y)| {
                let y = y.clamp(1e-12, 1.0 - 1e-12);
                -(d * y.ln() + (1.0 - d) * (1.0 - y).ln())
            })
            .sum(),
    }
}

/// Mean loss over a labelled batch.
pub fn batch_loss(
    model: &MlpModel,
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    loss: MlpLoss,
) -> Result<f64> {
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    check_labels(labels, model.class_count())?;
    let acts = model.activations(data);
    let y = one_hot(labels, model.class_count());
    Ok(sample_loss(loss, &y, acts.last().unwrap()) / data.nrows() as f64)
}

/// Per-layer gradient sums over a set of samples.
pub(crate) struct Grads(pub Vec<(Array2<f64>, Array1<f64>)>);

impl Grads {
    fn add(&mut self, other: Grads) {
        for ((w, b), (ow, ob)) in self.0.iter_mut().zip(other.0) {
            *w += &ow;
            *b += &ob;
        }
    }
}

/// Backpropagation over one chunk of samples; gradients are summed, not
/// averaged - the caller divides by the batch size.
fn chunk_grads(
    model: &MlpModel,
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    idx: &[usize],
    loss: MlpLoss,
) -> Grads {
    let input = data.select(Axis(0), idx);
    let target_labels: Vec<u16> = idx.iter().map(|&i| labels[i]).collect();
    let target = one_hot(&target_labels, model.class_count());

    let acts = model.activations(input.view());
    let output = acts.last().unwrap();

    // Output delta: dLoss/dz for each sample row.
    let mut delta = match loss {
        MlpLoss::SquaredError => {
            let mut d = output - &target;
            d.zip_mut_with(output, |v, &y| *v *= y * (1.0 - y));
            d
        }
        MlpLoss::CrossEntropy => output - &target,
    };

    let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(model.layers.len());
    for l in (0..model.layers.len()).rev() {
        let grad_w = delta.t().dot(&acts[l]);
        let grad_b = delta.sum_axis(Axis(0));
        grads.push((grad_w, grad_b));
        if l > 0 {
            let mut back = delta.dot(&model.layers[l].weights);
            back.zip_mut_with(&acts[l], |v, &a| *v *= a * (1.0 - a));
            delta = back;
        }
    }
    grads.reverse();
    Grads(grads)
}

/// Summed gradients for one mini-batch, accumulated over fixed-size index
/// chunks in order so the result is independent of thread scheduling.
fn batch_grads(
    model: &MlpModel,
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    batch: &[usize],
    loss: MlpLoss,
) -> Grads {
    let mut parts: Vec<Grads> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| chunk_grads(model, data, labels, chunk, loss))
        .collect();
    let mut total = parts.remove(0);
    for part in parts {
        total.add(part);
    }
    total
}

/// Mini-batch SGD on the squared-error objective.
pub fn train(
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    layer_sizes: &[usize],
    config: &TrainConfig,
) -> Result<MlpModel> {
    train_with_loss(data, labels, layer_sizes, config, MlpLoss::SquaredError)
}

/// Mini-batch SGD with an explicit objective.
///
/// Inputs are standardized per bin for the duration of training and the
/// transform is folded into the first layer of the returned model, which
/// therefore consumes raw feature vectors.
pub fn train_with_loss(
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    layer_sizes: &[usize],
    config: &TrainConfig,
    loss: MlpLoss,
) -> Result<MlpModel> {
    config.validate()?;
    validate_sizes(layer_sizes)?;
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("no training data".into()));
    }
    if data.ncols() != layer_sizes[0] {
        return Err(Error::shape(format!(
            "data dimension {} vs input layer {}",
            data.ncols(),
            layer_sizes[0]
        )));
    }
    check_labels(labels, *layer_sizes.last().unwrap())?;
    if labels.len() != data.nrows() {
        return Err(Error::shape(format!(
            "{} rows vs {} labels",
            data.nrows(),
            labels.len()
        )));
    }

    let standardizer = Standardizer::fit(data);
    let standardized = standardizer.apply(data);
    let data = standardized.view();

    let mut rng = rng_from_seed(config.seed);
    let mut model = MlpModel::init(layer_sizes, &mut rng)?;
    let mut indices: Vec<usize> = (0..data.nrows()).collect();

    for _ in 0..config.epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(config.batch_size) {
            let grads = batch_grads(&model, data, labels, batch, loss);
            let scale = config.learning_rate / batch.len() as f64;
            for (layer, (gw, gb)) in model.layers.iter_mut().zip(grads.0) {
                layer.weights.scaled_add(-scale, &gw);
                layer.biases.scaled_add(-scale, &gb);
            }
        }
    }
    standardizer.fold_into(&mut model.layers[0]);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    use crate::seeding::rng_from_seed;

    fn random_data(seed: u64, m: usize, d: usize, k: usize) -> (Array2<f64>, Vec<u16>) {
        let mut rng = rng_from_seed(seed);
        let data = Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0));
        let labels = (0..m).map(|_| rng.random_range(0..k) as u16).collect();
        (data, labels)
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let layers = vec![Layer::zeros(4, 6), Layer::zeros(3, 4)];
        let model = MlpModel::from_layers(layers).unwrap();
        let out = model.forward(&[1.0, -2.0, 0.5, 0.0, 3.0, -1.0]).unwrap();
        for &y in &out {
            assert_eq!(y, 0.5);
        }
    }

    #[test]
    fn single_unit_identity_case() {
        let layer = Layer {
            weights: array![[1.0]],
            biases: array![0.0],
        };
        let model = MlpModel::from_layers(vec![layer]).unwrap();
        let out = model.forward(&[0.0]).unwrap();
        assert_eq!(out, vec![0.5]);
    }

    #[test]
    fn forward_matches_independent_recomputation() {
        let mut rng = rng_from_seed(42);
        let model = MlpModel::init(&[5, 4, 3], &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fast = model.forward(&x).unwrap();

        // Plain re-evaluation, layer by layer.
        let mut a = x.clone();
        for layer in model.layers() {
            let mut next = Vec::new();
            for o in 0..layer.biases.len() {
                let mut z = layer.biases[o];
                for (i, &ai) in a.iter().enumerate() {
                    z += layer.weights[(o, i)] * ai;
                }
                next.push(1.0 / (1.0 + (-z).exp()));
            }
            a = next;
        }
        for (f, s) in fast.iter().zip(&a) {
            assert!((f - s).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_error_examples() {
        assert_eq!(mlp_error(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(mlp_error(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let mut rng = rng_from_seed(3);
        let d: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
        let brute: f64 = d
            .iter()
            .zip(&y)
            .map(|(a, b)| 0.5 * (a - b) * (a - b))
            .sum();
        assert!((mlp_error(&d, &y).unwrap() - brute).abs() < 1e-15);
        assert!(mlp_error(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_zero_or_too_many_hidden_layers() {
        let (data, labels) = random_data(1, 10, 4, 2);
        let config = TrainConfig::default();
        assert!(matches!(
            train(data.view(), &labels, &[4, 2], &config),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train(data.view(), &labels, &[4, 3, 3, 3, 3, 2], &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gradients_match_central_differences() {
        for loss in [MlpLoss::SquaredError, MlpLoss::CrossEntropy] {
            let (data, labels) = random_data(5, 5, 4, 2);
            let mut rng = rng_from_seed(17);
            let model = MlpModel::init(&[4, 3, 2], &mut rng).unwrap();
            let batch: Vec<usize> = (0..5).collect();
            let grads = batch_grads(&model, data.view(), &labels, &batch, loss);

            let h = 1e-5;
            let mut coord_rng = rng_from_seed(99);
            for _ in 0..50 {
                let l = coord_rng.random_range(0..2);
                let (rows, cols) = model.layers()[l].weights.dim();
                let r = coord_rng.random_range(0..rows);
                let c = coord_rng.random_range(0..cols + 1); // last column = bias

                let mut plus = model.clone();
                let mut minus = model.clone();
                if c < cols {
                    plus.layers_mut()[l].weights[(r, c)] += h;
                    minus.layers_mut()[l].weights[(r, c)] -= h;
                } else {
                    plus.layers_mut()[l].biases[r] += h;
                    minus.layers_mut()[l].biases[r] -= h;
                }
                let lp = batch_loss(&plus, data.view(), &labels, loss).unwrap();
                let lm = batch_loss(&minus, data.view(), &labels, loss).unwrap();
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = if c < cols {
                    grads.0[l].0[(r, c)] / 5.0
                } else {
                    grads.0[l].1[r] / 5.0
                };
                let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
                assert!(
                    rel < 1e-5,
                    "{loss:?} layer {l} ({r},{c}): numeric {numeric}, analytic {analytic}, rel {rel}"
                );
            }
        }
    }

    #[test]
    fn xor_is_learnable_with_one_hidden_layer() {
        let data = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let labels: Vec<u16> = vec![0, 1, 1, 0];
        let config = TrainConfig {
            learning_rate: 2.0,
            epochs: 4000,
            batch_size: 4,
            seed: 1,
            lambda: 0.0,
        };
        let model = train(data.view(), &labels, &[2, 8, 2], &config).unwrap();
        for (row, &label) in data.rows().into_iter().zip(&labels) {
            let pred = model.predict(row.as_slice().unwrap()).unwrap();
            assert_eq!(pred, usize::from(label), "misclassified {:?}", row);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (data, labels) = random_data(8, 64, 6, 3);
        let config = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        let a = train(data.view(), &labels, &[6, 5, 3], &config).unwrap();
        let b = train(data.view(), &labels, &[6, 5, 3], &config).unwrap();
        assert_eq!(a, b);
        let c = train(
            data.view(),
            &labels,
            &[6, 5, 3],
            &TrainConfig {
                seed: 9,
                ..config.clone()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn folding_the_standardizer_preserves_the_function() {
        let (data, _) = random_data(21, 30, 6, 2);
        let standardizer = Standardizer::fit(data.view());
        let standardized = standardizer.apply(data.view());

        let mut rng = rng_from_seed(22);
        let model = MlpModel::init(&[6, 4, 2], &mut rng).unwrap();
        let mut folded = model.clone();
        standardizer.fold_into(&mut folded.layers_mut()[0]);

        for i in 0..data.nrows() {
            let on_standardized = model
                .forward(standardized.row(i).as_slice().unwrap())
                .unwrap();
            let on_raw = folded.forward(data.row(i).as_slice().unwrap()).unwrap();
            for (a, b) in on_standardized.iter().zip(&on_raw) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_uses_glorot_bounds() {
        let mut rng = rng_from_seed(0);
        let model = MlpModel::init(&[100, 50, 10], &mut rng).unwrap();
        let r0 = (6.0 / 150.0f64).sqrt();
        for &w in model.layers()[0].weights.iter() {
            assert!(w.abs() <= r0);
        }
        assert!(model.layers()[0].biases.iter().all(|&b| b == 0.0));
    }
}
