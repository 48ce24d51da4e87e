//! Softmax regression with weight decay, trained by full-batch gradient
//! descent from a zero start. The cost is the regularized negative
//! log-likelihood; its gradient is computed in closed form and the descent
//! is deterministic, so the cost history is reproducible bit for bit.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::learn::{check_labels, TrainConfig};

/// Parameters: one row per class, with the bias appended as the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    theta: Array2<f64>,
    lambda: f64,
}

impl SoftmaxModel {
    /// Zero-initialized model: every class starts equally likely.
    pub fn zeros(class_count: usize, feature_dim: usize, lambda: f64) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::config("softmax needs at least two classes"));
        }
        if feature_dim == 0 {
            return Err(Error::config("feature dimension must be positive"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda must be non-negative and finite"));
        }
        Ok(SoftmaxModel {
            theta: Array2::zeros((class_count, feature_dim + 1)),
            lambda,
        })
    }

    pub(crate) fn from_parts(theta: Array2<f64>, lambda: f64) -> Result<Self> {
        if theta.nrows() < 2 || theta.ncols() < 2 {
            return Err(Error::shape("theta must be K x (D+1) with K,D >= 2,1"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(SoftmaxModel { theta, lambda })
    }

    pub fn class_count(&self) -> usize {
        self.theta.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.theta.ncols() - 1
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> ArrayView2<'_, f64> {
        self.theta.view()
    }

    pub fn theta_mut(&mut self) -> &mut Array2<f64> {
        &mut self.theta
    }

    /// Weight block (bias column excluded).
    fn weights(&self) -> ArrayView2<'_, f64> {
        self.theta.slice(s![.., ..self.feature_dim()])
    }

    fn biases(&self) -> ArrayView1<'_, f64> {
        self.theta.slice(s![.., self.feature_dim()])
    }

    /// Class probabilities for one input; max-subtracted for overflow
    /// safety. The output sums to one and every entry is in (0, 1).
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim() {
            return Err(Error::shape(format!(
                "input dimension {} vs model dimension {}",
                x.len(),
                self.feature_dim()
            )));
        }
        let x = ArrayView1::from(x);
        let mut logits: Vec<f64> = self
            .weights()
            .rows()
            .into_iter()
            .zip(self.biases())
            .map(|(row, &b)| row.dot(&x) + b)
            .collect();
        softmax_in_place(&mut logits);
        Ok(logits)
    }

    /// Row-wise class probabilities for a batch (`m x K`).
    pub fn predict_batch(&self, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut logits = self.batch_logits(data)?;
        for mut row in logits.rows_mut() {
            let buf = row.as_slice_mut().expect("row-major logits");
            softmax_in_place(buf);
        }
        Ok(logits)
    }

    fn batch_logits(&self, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.feature_dim() {
            return Err(Error::shape(format!(
                "data dimension {} vs model dimension {}",
                data.ncols(),
                self.feature_dim()
            )));
        }
        let mut logits = data.dot(&self.weights().t());
        for mut row in logits.rows_mut() {
            row += &self.biases();
        }
        Ok(logits)
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Regularized cost and its analytic gradient.
///
/// `J = -(1/m) sum_i log p_{y_i}(x_i) + (lambda/2) sum W^2` with the decay
/// running over the weight block only; the bias column is not penalized.
/// The gradient row for class j is `-(1/m) sum_i x~_i (1{y_i=j} - p_j(x_i))`
/// plus `lambda W_j` on the weight block.
pub fn cost_grad(
    model: &SoftmaxModel,
    data: ArrayView2<'_, f64>,
    labels: &[u16],
) -> Result<(f64, Array2<f64>)> {
    let k = model.class_count();
    let d = model.feature_dim();
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    if data.nrows() != labels.len() {
        return Err(Error::shape(format!(
            "{} rows vs {} labels",
            data.nrows(),
            labels.len()
        )));
    }
    check_labels(labels, k)?;

    let m = data.nrows();
    let inv_m = 1.0 / m as f64;
    let logits = model.batch_logits(data)?;

    // Stable log-probabilities and the residual (indicator - probability).
    let mut nll = 0.0;
    let mut residual = Array2::zeros((m, k));
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let log_sum = max + sum.ln();
        let y = usize::from(labels[i]);
        nll -= row[y] - log_sum;
        for j in 0..k {
            let p = (row[j] - log_sum).exp();
            residual[(i, j)] = if j == y { 1.0 - p } else { -p };
        }
    }

    let weights = model.weights();
    let decay: f64 = weights.iter().map(|w| w * w).sum();
    let cost = inv_m * nll + 0.5 * model.lambda * decay;

    let mut grad = Array2::zeros((k, d + 1));
    {
        let grad_w = residual.t().dot(&data); // K x D
        let mut block = grad.slice_mut(s![.., ..d]);
        block.assign(&grad_w);
        block *= -inv_m;
        block.scaled_add(model.lambda, &weights);
    }
    {
        let grad_b = residual.sum_axis(Axis(0)); // K
        let mut col = grad.slice_mut(s![.., d]);
        col.assign(&grad_b);
        col *= -inv_m;
    }
    Ok((cost, grad))
}

/// Full-batch gradient descent from zeros. Returns the trained model and
/// the cost at every iterate, including the final one (so the history has
/// `epochs + 1` entries and starts at `ln K` when `lambda` is zero).
pub fn train(
    data: ArrayView2<'_, f64>,
    labels: &[u16],
    class_count: usize,
    config: &TrainConfig,
) -> Result<(SoftmaxModel, Vec<f64>)> {
    config.validate()?;
    let mut model = SoftmaxModel::zeros(class_count, data.ncols(), config.lambda)?;
    let mut costs = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (cost, grad) = cost_grad(&model, data, labels)?;
        costs.push(cost);
        model.theta.scaled_add(-config.learning_rate, &grad);
    }
    let (final_cost, _) = cost_grad(&model, data, labels)?;
    costs.push(final_cost);
    Ok((model, costs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    use crate::seeding::rng_from_seed;

    fn random_model(seed: u64, k: usize, d: usize, lambda: f64) -> SoftmaxModel {
        let mut rng = rng_from_seed(seed);
        let theta = Array2::from_shape_fn((k, d + 1), |_| rng.random_range(-0.5..0.5));
        SoftmaxModel::from_parts(theta, lambda).unwrap()
    }

    fn random_data(seed: u64, m: usize, d: usize, k: usize) -> (Array2<f64>, Vec<u16>) {
        let mut rng = rng_from_seed(seed);
        let data = Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0));
        let labels = (0..m).map(|_| rng.random_range(0..k) as u16).collect();
        (data, labels)
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = SoftmaxModel::zeros(9, 5, 0.0).unwrap();
        let p = model.predict(&[0.3, -0.4, 1.0, 0.0, 2.0]).unwrap();
        for &v in &p {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn probabilities_form_a_simplex() {
        let model = random_model(3, 7, 12, 0.0);
        let mut rng = rng_from_seed(4);
        for _ in 0..20 {
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = model.predict(&x).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn shift_invariance() {
        let model = random_model(5, 4, 6, 0.0);
        let x: Vec<f64> = vec![0.2, -1.0, 0.5, 3.0, -0.7, 0.1];
        let base = model.predict(&x).unwrap();

        let mut shifted = model.clone();
        let constant = array![0.9, -0.3, 0.0, 2.0, 1.1, -0.5, 0.4];
        for mut row in shifted.theta.rows_mut() {
            row += &constant.view();
        }
        let p = shifted.predict(&x).unwrap();
        for (a, b) in base.iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_matches_direct_hypothesis_evaluation() {
        // Direct evaluation of the hypothesis without max subtraction is
        // accurate while logits are moderate.
        let model = random_model(8, 5, 10, 0.0);
        let mut rng = rng_from_seed(9);
        for _ in 0..10 {
            let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = model.predict(&x).unwrap();
            let logits: Vec<f64> = (0..5)
                .map(|j| {
                    let mut z = model.theta[(j, 10)];
                    for (i, &xi) in x.iter().enumerate() {
                        z += model.theta[(j, i)] * xi;
                    }
                    z
                })
                .collect();
            let denom: f64 = logits.iter().map(|z| z.exp()).sum();
            for (j, &pj) in p.iter().enumerate() {
                let direct = logits[j].exp() / denom;
                assert!((pj - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let model = SoftmaxModel::zeros(3, 4, 0.0).unwrap();
        assert!(matches!(model.predict(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_theta_cost_is_ln_k() {
        let (data, labels) = random_data(1, 40, 6, 9);
        let model = SoftmaxModel::zeros(9, 6, 0.0).unwrap();
        let (cost, _) = cost_grad(&model, data.view(), &labels).unwrap();
        assert!((cost - 9.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn decay_term_decomposes() {
        let (data, labels) = random_data(2, 30, 5, 4);
        let lambda = 0.37;
        let plain = random_model(11, 4, 5, 0.0);
        let decayed = SoftmaxModel::from_parts(plain.theta.clone(), lambda).unwrap();
        let (j0, _) = cost_grad(&plain, data.view(), &labels).unwrap();
        let (j1, _) = cost_grad(&decayed, data.view(), &labels).unwrap();
        let w2: f64 = plain.weights().iter().map(|w| w * w).sum();
        assert!(j1 > j0);
        assert!((j1 - j0 - 0.5 * lambda * w2).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (data, labels) = random_data(3, 20, 10, 3);
        let model = random_model(12, 3, 10, 0.05);
        let (_, grad) = cost_grad(&model, data.view(), &labels).unwrap();

        let mut rng = rng_from_seed(100);
        let h = 1e-5;
        for _ in 0..50 {
            let j = rng.random_range(0..3);
            let i = rng.random_range(0..11);
            let mut plus = model.clone();
            plus.theta[(j, i)] += h;
            let mut minus = model.clone();
            minus.theta[(j, i)] -= h;
            let (jp, _) = cost_grad(&plus, data.view(), &labels).unwrap();
            let (jm, _) = cost_grad(&minus, data.view(), &labels).unwrap();
            let numeric = (jp - jm) / (2.0 * h);
            let analytic = grad[(j, i)];
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
            assert!(
                rel < 1e-5,
                "coordinate ({j},{i}): numeric {numeric}, analytic {analytic}, rel {rel}"
            );
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let model = SoftmaxModel::zeros(3, 4, 0.0).unwrap();
        let data = Array2::<f64>::zeros((0, 4));
        assert!(matches!(
            cost_grad(&model, data.view(), &[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        let model = SoftmaxModel::zeros(3, 2, 0.0).unwrap();
        let data = Array2::<f64>::zeros((2, 2));
        assert!(matches!(
            cost_grad(&model, data.view(), &[0, 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn separable_toy_set_reaches_full_accuracy() {
        // Ten 2-D points, two classes split by the first coordinate.
        let data = array![
            [1.0, 0.2],
            [1.3, -0.4],
            [0.8, 0.9],
            [1.1, 0.0],
            [0.9, -0.8],
            [-1.0, 0.3],
            [-1.2, -0.5],
            [-0.8, 0.8],
            [-1.1, 0.1],
            [-0.9, -0.9],
        ];
        let labels: Vec<u16> = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let config = TrainConfig::for_softmax();
        let (model, costs) = train(data.view(), &labels, 2, &config).unwrap();
        let mut correct = 0;
        for (row, &label) in data.rows().into_iter().zip(&labels) {
            let p = model.predict(row.as_slice().unwrap()).unwrap();
            if crate::learn::argmax(&p) == usize::from(label) {
                correct += 1;
            }
        }
        assert_eq!(correct, 10);
        assert!(costs.last().unwrap() < &costs[0]);
    }

    #[test]
    fn huge_decay_shrinks_weights() {
        // With lambda this large the stationary point is essentially zero;
        // the step size is chosen small enough that decay dominates stably.
        let (data, labels) = random_data(6, 30, 8, 3);
        let config = TrainConfig {
            learning_rate: 1e-6,
            lambda: 1e6,
            ..TrainConfig::default()
        };
        let (model, _) = train(data.view(), &labels, 3, &config).unwrap();
        let norm: f64 = model.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "weight norm {norm}");
    }

    #[test]
    fn training_is_deterministic() {
        let (data, labels) = random_data(7, 60, 9, 4);
        let config = TrainConfig::for_softmax();
        let (a, ca) = train(data.view(), &labels, 4, &config).unwrap();
        let (b, cb) = train(data.view(), &labels, 4, &config).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(ca, cb);
    }

    #[test]
    fn descent_is_monotone_at_a_stable_rate() {
        let (data, labels) = random_data(8, 100, 12, 5);
        let config = TrainConfig {
            learning_rate: 0.5,
            lambda: 0.0,
            ..TrainConfig::default()
        };
        let (_, costs) = train(data.view(), &labels, 5, &config).unwrap();
        assert!((costs[0] - 5.0f64.ln()).abs() < 1e-12);
        for w in costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "cost rose: {} -> {}", w[0], w[1]);
        }
    }
}
