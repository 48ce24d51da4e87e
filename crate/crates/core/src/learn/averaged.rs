//! Chunk-averaged MLP.
//!
//! The input vector is split into contiguous chunks, each chunk feeds its
//! own first hidden layer, the chunk outputs are concatenated, and the rest
//! of the chain is shared. Functionally this is an ordinary MLP whose first
//! weight matrix is block-diagonal; the whole network trains end to end
//! with the same backpropagation.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learn::mlp::{one_hot, sigmoid, Layer, MlpLoss};
use crate::learn::{check_labels, TrainConfig, GRAD_CHUNK};
use crate::seeding::rng_from_seed;

/// Contiguous partition: the first `chunks - 1` parts take
/// `ceil(total / chunks)` items and the last takes the remainder.
pub fn chunk_spans(total: usize, chunks: usize) -> Result<Vec<(usize, usize)>> {
    if chunks < 2 {
        return Err(Error::config("chunk_count must be at least 2"));
    }
    let size = total.div_ceil(chunks);
    let head = size * (chunks - 1);
    if head >= total {
        return Err(Error::config(format!(
            "{chunks} chunks leave nothing for the last chunk of {total}"
        )));
    }
    let mut spans: Vec<(usize, usize)> = (0..chunks - 1).map(|c| (c * size, size)).collect();
    spans.push((head, total - head));
    Ok(spans)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedMlpModel {
    chunk_layers: Vec<Layer>,
    shared_layers: Vec<Layer>,
    input_spans: Vec<(usize, usize)>,
    hidden_spans: Vec<(usize, usize)>,
    layer_sizes: Vec<usize>,
}

impl AveragedMlpModel {
    pub fn from_parts(
        chunk_layers: Vec<Layer>,
        shared_layers: Vec<Layer>,
        layer_sizes: Vec<usize>,
    ) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::shape("size chain needs input, hidden, output"));
        }
        let chunk_count = chunk_layers.len();
        let input_spans = chunk_spans(layer_sizes[0], chunk_count)?;
        let hidden_spans = chunk_spans(layer_sizes[1], chunk_count)?;
        for (c, layer) in chunk_layers.iter().enumerate() {
            if layer.weights.ncols() != input_spans[c].1
                || layer.weights.nrows() != hidden_spans[c].1
                || layer.biases.len() != hidden_spans[c].1
            {
                return Err(Error::shape(format!("chunk layer {c} dimensions mismatch")));
            }
        }
        let mut prev = layer_sizes[1];
        for (i, layer) in shared_layers.iter().enumerate() {
            if layer.weights.ncols() != prev || layer.weights.nrows() != layer.biases.len() {
                return Err(Error::shape(format!("shared layer {i} dimensions mismatch")));
            }
            prev = layer.weights.nrows();
        }
        if prev != *layer_sizes.last().unwrap() {
            return Err(Error::shape("shared chain does not end at the output"));
        }
        Ok(AveragedMlpModel {
            chunk_layers,
            shared_layers,
            input_spans,
            hidden_spans,
            layer_sizes,
        })
    }

    pub fn chunk_count(&self) -> usize {
        self.chunk_layers.len()
    }

    pub fn chunk_layers(&self) -> &[Layer] {
        &self.chunk_layers
    }

    pub fn chunk_layers_mut(&mut self) -> &mut [Layer] {
        &mut self.chunk_layers
    }

    pub fn shared_layers(&self) -> &[Layer] {
        &self.shared_layers
    }

    pub fn shared_layers_mut(&mut self) -> &mut [Layer] {
        &mut self.shared_layers
    }

    /// Conceptual size chain `[input, first_hidden_total, ..., classes]`.
    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// First hidden activations: each chunk through its own layer, results
    /// concatenated in chunk order.
    fn first_hidden(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let m = input.nrows();
        let mut h = Array2::zeros((m, self.layer_sizes[1]));
        for (c, layer) in self.chunk_layers.iter().enumerate() {
            let (in_start, in_len) = self.input_spans[c];
            let (h_start, h_len) = self.hidden_spans[c];
            let slice = input.slice(s![.., in_start..in_start + in_len]);
            let mut z = slice.dot(&layer.weights.t());
            for mut row in z.rows_mut() {
                row += &layer.biases.view();
            }
            z.mapv_inplace(sigmoid);
            h.slice_mut(s![.., h_start..h_start + h_len]).assign(&z);
        }
        h
    }

    /// Activations: input, concatenated first hidden, then the shared chain.
    fn activations(&self, input: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.shared_layers.len() + 2);
        acts.push(input.to_owned());
        acts.push(self.first_hidden(input));
        for layer in &self.shared_layers {
            let next = layer.forward_batch(acts.last().unwrap().view());
            acts.push(next);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input dimension {} vs network input {}",
                x.len(),
                self.input_dim()
            )));
        }
        let input = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let acts = self.activations(input);
        Ok(acts.last().unwrap().row(0).to_vec())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::learn::argmax(&self.forward(x)?))
    }
}

struct AveragedGrads {
    chunks: Vec<(Array2<f64>, Array1<f64>)>,
    shared: Vec<(Array2<f64>, Array1<f64>)>,
}

impl AveragedGrads {
    fn add(&mut self, other: AveragedGrads) {
        for ((w, b), (ow, ob)) in self.chunks.iter_mut().zip(other.chunks) {
            *w += &ow;
            *b += &ob;
        }
        for ((w, b), (ow, ob)) in self.shared.iter_mut().zip(other.shared) {
            *w += &ow;
            *b += &ob;
        }
    }
}

fn chunk_grads(
    model: &AveragedMlpModel,
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    idx: &[usize],
    loss: MlpLoss,
) -> AveragedGrads {
    let input = data.select(Axis(0), idx);
    let target_labels: Vec<u16> = idx.iter().map(|&i| labels[i]).collect();
    let target = one_hot(&target_labels, model.class_count());

    let acts = model.activations(input.view());
    let output = acts.last().unwrap();

    let mut delta = match loss {
        MlpLoss::SquaredError => {
            let mut d = output - &target;
            d.zip_mut_with(output, |v, &y| *v *= y * (1.0 - y));
            d
        }
        MlpLoss::CrossEntropy => output - &target,
    };

    // Shared chain, walking back to the concatenated hidden activations.
    // acts[1] is the concatenation; shared layer l consumes acts[l+1].
    let mut shared: Vec<(Array2<f64>, Array1<f64>)> =
        Vec::with_capacity(model.shared_layers.len());
    for l in (0..model.shared_layers.len()).rev() {
        let grad_w = delta.t().dot(&acts[l + 1]);
        let grad_b = delta.sum_axis(Axis(0));
        shared.push((grad_w, grad_b));
        let mut back = delta.dot(&model.shared_layers[l].weights);
        back.zip_mut_with(&acts[l + 1], |v, &a| *v *= a * (1.0 - a));
        delta = back;
    }
    shared.reverse();

    // delta now sits at the concatenated hidden layer, sigma' applied.
    let chunks = model
        .chunk_layers
        .iter()
        .enumerate()
        .map(|(c, _)| {
            let (in_start, in_len) = model.input_spans[c];
            let (h_start, h_len) = model.hidden_spans[c];
            let delta_c = delta.slice(s![.., h_start..h_start + h_len]);
            let input_c = acts[0].slice(s![.., in_start..in_start + in_len]);
            let grad_w = delta_c.t().dot(&input_c);
            let grad_b = delta_c.sum_axis(Axis(0));
            (grad_w, grad_b)
        })
        .collect();

    AveragedGrads { chunks, shared }
}

fn batch_grads(
    model: &AveragedMlpModel,
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    batch: &[usize],
    loss: MlpLoss,
) -> AveragedGrads {
    let mut parts: Vec<AveragedGrads> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| chunk_grads(model, data, labels, chunk, loss))
        .collect();
    let mut total = parts.remove(0);
    for part in parts {
        total.add(part);
    }
    total
}

/// Mean loss over a labelled batch; used by gradient checks and reporting.
pub fn batch_loss(
    model: &AveragedMlpModel,
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
    let output = acts.last().unwrap();
    let total: f64 = match loss {
        MlpLoss::SquaredError => {
            0.5 * y
                .iter()
                .zip(output.iter())
                .map(|(d, v)| (d - v) * (d - v))
                .sum::<f64>()
        }
        MlpLoss::CrossEntropy => y
            .iter()
            .zip(output.iter())
            .map(|(d, v)| {
                let v = v.clamp(1e-12, 1.0 - 1e-12);
                -(d * v.ln() + (1.0 - d) * (1.0 - v).ln())
            })
            .sum(),
    };
    Ok(total / data.nrows() as f64)
}

/// End-to-end training of the chunked network (squared-error objective).
pub fn train(
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    chunk_count: usize,
    layer_sizes: &[usize],
    config: &TrainConfig,
) -> Result<AveragedMlpModel> {
    config.validate()?;
    if layer_sizes.len() < 3 || layer_sizes.len() > 5 {
        return Err(Error::config(format!(
            "{} hidden layers; the explored range is 1 to 3",
            layer_sizes.len().saturating_sub(2)
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::config("layer sizes must be positive"));
    }
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

    let input_spans = chunk_spans(layer_sizes[0], chunk_count)?;
    let hidden_spans = chunk_spans(layer_sizes[1], chunk_count)?;

    // Standardized coordinates during training, folded into the chunk
    // layers afterwards, exactly as in the plain MLP trainer.
    let standardizer = crate::learn::mlp::Standardizer::fit(data);
    let standardized = standardizer.apply(data);
    let data = standardized.view();

    let mut rng = rng_from_seed(config.seed);
    let chunk_layers: Vec<Layer> = (0..chunk_count)
        .map(|c| Layer::glorot(hidden_spans[c].1, input_spans[c].1, &mut rng))
        .collect();
    let shared_layers: Vec<Layer> = layer_sizes[1..]
        .windows(2)
        .map(|w| Layer::glorot(w[1], w[0], &mut rng))
        .collect();
    let mut model =
        AveragedMlpModel::from_parts(chunk_layers, shared_layers, layer_sizes.to_vec())?;

    let loss = MlpLoss::SquaredError;
    let mut indices: Vec<usize> = (0..data.nrows()).collect();
    for _ in 0..config.epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(config.batch_size) {
            let grads = batch_grads(&model, data, labels, batch, loss);
            let scale = config.learning_rate / batch.len() as f64;
            for (layer, (gw, gb)) in model.chunk_layers.iter_mut().zip(&grads.chunks) {
                layer.weights.scaled_add(-scale, gw);
                layer.biases.scaled_add(-scale, gb);
            }
            for (layer, (gw, gb)) in model.shared_layers.iter_mut().zip(&grads.shared) {
                layer.weights.scaled_add(-scale, gw);
                layer.biases.scaled_add(-scale, gb);
            }
        }
    }
    for (c, layer) in model.chunk_layers.iter_mut().enumerate() {
        let (start, len) = model.input_spans[c];
        standardizer.slice(start, len).fold_into(layer);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    use crate::learn::mlp::MlpModel;
    use crate::seeding::rng_from_seed;

    fn random_data(seed: u64, m: usize, d: usize, k: usize) -> (Array2<f64>, Vec<u16>) {
        let mut rng = rng_from_seed(seed);
        let data = Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0));
        let labels = (0..m).map(|_| rng.random_range(0..k) as u16).collect();
        (data, labels)
    }

    fn random_model(seed: u64, chunk_count: usize, sizes: &[usize]) -> AveragedMlpModel {
        let input_spans = chunk_spans(sizes[0], chunk_count).unwrap();
        let hidden_spans = chunk_spans(sizes[1], chunk_count).unwrap();
        let mut rng = rng_from_seed(seed);
        let chunk_layers = (0..chunk_count)
            .map(|c| Layer::glorot(hidden_spans[c].1, input_spans[c].1, &mut rng))
            .collect();
        let shared_layers = sizes[1..]
            .windows(2)
            .map(|w| Layer::glorot(w[1], w[0], &mut rng))
            .collect();
        AveragedMlpModel::from_parts(chunk_layers, shared_layers, sizes.to_vec()).unwrap()
    }

    #[test]
    fn spans_cover_the_input_with_a_short_tail() {
        let spans = chunk_spans(2049, 4).unwrap();
        assert_eq!(spans, vec![(0, 513), (513, 513), (1026, 513), (1539, 510)]);
        assert!(chunk_spans(10, 1).is_err());
        assert!(chunk_spans(10, 6).is_err());
    }

    #[test]
    fn chunk_count_below_two_is_a_config_error() {
        let (data, labels) = random_data(1, 12, 8, 2);
        assert!(matches!(
            train(data.view(), &labels, 1, &[8, 4, 2], &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identical_chunk_weights_give_identical_chunk_outputs() {
        // Equal-size chunks with the same sub-weights and the same input in
        // every chunk behave like one shared layer applied per chunk.
        let chunk = Layer::glorot(3, 4, &mut rng_from_seed(5));
        let chunk_layers = vec![chunk.clone(), chunk.clone()];
        let shared = vec![Layer::glorot(2, 6, &mut rng_from_seed(6))];
        let model = AveragedMlpModel::from_parts(chunk_layers, shared, vec![8, 6, 2]).unwrap();

        let sub: Vec<f64> = vec![0.3, -0.8, 0.1, 0.9];
        let x: Vec<f64> = sub.iter().chain(&sub).cloned().collect();
        let input = ArrayView2::from_shape((1, 8), x.as_slice()).unwrap();
        let h = model.first_hidden(input);
        for j in 0..3 {
            assert!((h[(0, j)] - h[(0, 3 + j)]).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_block_diagonal_mlp() {
        // Brute-force oracle: assemble the equivalent ordinary MLP whose
        // first weight matrix is block-diagonal in the chunk weights.
        let sizes = [10, 6, 5, 3];
        let chunk_count = 3;
        let model = random_model(7, chunk_count, &sizes);

        let mut w1 = Array2::zeros((6, 10));
        let mut b1 = ndarray::Array1::zeros(6);
        for (c, layer) in model.chunk_layers().iter().enumerate() {
            let (in_start, in_len) = chunk_spans(10, chunk_count).unwrap()[c];
            let (h_start, h_len) = chunk_spans(6, chunk_count).unwrap()[c];
            for r in 0..h_len {
                b1[h_start + r] = layer.biases[r];
                for i in 0..in_len {
                    w1[(h_start + r, in_start + i)] = layer.weights[(r, i)];
                }
            }
        }
        let mut layers = vec![Layer {
            weights: w1,
            biases: b1,
        }];
        layers.extend(model.shared_layers().iter().cloned());
        let flat = MlpModel::from_layers(layers).unwrap();

        let mut rng = rng_from_seed(8);
        for _ in 0..10 {
            let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = model.forward(&x).unwrap();
            let b = flat.forward(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let (data, labels) = random_data(9, 6, 10, 3);
        let model = random_model(11, 2, &[10, 6, 3]);
        let batch: Vec<usize> = (0..6).collect();
        let grads = batch_grads(&model, data.view(), &labels, &batch, MlpLoss::SquaredError);

        let h = 1e-5;
        let mut coord_rng = rng_from_seed(50);
        for _ in 0..50 {
            // Alternate between chunk and shared parameters.
            let on_chunk = coord_rng.random::<bool>();
            let (l, rows, cols) = if on_chunk {
                let l = coord_rng.random_range(0..model.chunk_layers().len());
                let (r, c) = model.chunk_layers()[l].weights.dim();
                (l, r, c)
            } else {
                let l = coord_rng.random_range(0..model.shared_layers().len());
                let (r, c) = model.shared_layers()[l].weights.dim();
                (l, r, c)
            };
            let r = coord_rng.random_range(0..rows);
            let c = coord_rng.random_range(0..cols + 1);

            let mut plus = model.clone();
            let mut minus = model.clone();
            {
                let (p, m) = if on_chunk {
                    (&mut plus.chunk_layers_mut()[l], &mut minus.chunk_layers_mut()[l])
                } else {
                    (&mut plus.shared_layers_mut()[l], &mut minus.shared_layers_mut()[l])
                };
                if c < cols {
                    p.weights[(r, c)] += h;
                    m.weights[(r, c)] -= h;
                } else {
                    p.biases[r] += h;
                    m.biases[r] -= h;
                }
            }
            let lp = batch_loss(&plus, data.view(), &labels, MlpLoss::SquaredError).unwrap();
            let lm = batch_loss(&minus, data.view(), &labels, MlpLoss::SquaredError).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = if on_chunk {
                if c < cols {
                    grads.chunks[l].0[(r, c)] / 6.0
                } else {
                    grads.chunks[l].1[r] / 6.0
                }
            } else if c < cols {
                grads.shared[l].0[(r, c)] / 6.0
            } else {
                grads.shared[l].1[r] / 6.0
            };
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
            assert!(
                rel < 1e-5,
                "chunk={on_chunk} layer {l} ({r},{c}): numeric {numeric}, analytic {analytic}"
            );
        }
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        // Two well-separated clusters; the chunked net must classify them.
        let mut rng = rng_from_seed(13);
        let m = 60;
        let mut data = Array2::zeros((m, 8));
        let mut labels = Vec::with_capacity(m);
        for i in 0..m {
            let class = (i % 2) as u16;
            let center = if class == 0 { 0.8 } else { -0.8 };
            for j in 0..8 {
                data[(i, j)] = center + 0.1 * rng.random_range(-1.0..1.0);
            }
            labels.push(class);
        }
        let config = TrainConfig {
            epochs: 60,
            learning_rate: 0.5,
            batch_size: 16,
            seed: 3,
            lambda: 0.0,
        };
        let a = train(data.view(), &labels, 2, &[8, 6, 2], &config).unwrap();
        let b = train(data.view(), &labels, 2, &[8, 6, 2], &config).unwrap();
        assert_eq!(a, b);

        let correct = (0..m)
            .filter(|&i| {
                let x: Vec<f64> = data.row(i).to_vec();
                a.predict(&x).unwrap() == usize::from(labels[i])
            })
            .count();
        assert!(correct >= 58, "only {correct}/60 correct");
    }
}
