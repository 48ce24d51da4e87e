// Dev-only probe: class separation required by each трainer on synthetic
// Gaussian data shaped like the corpus features.

use ndarray::Array2;
use rand::Rng;

use deviceprint::learn::{mlp, softmax, MlpLoss, TrainConfig};
use deviceprint::seeding::rng_from_seed;

fn make_data(
    seed: u64,
    m: usize,
    d: usize,
    k: usize,
    delta: f64,
    sigma: f64,
    base: f64,
) -> (Array2<f64>, Vec<u16>) {
    // Class structure is fixed across train and test; only sample noise
    // follows `seed`.
    let mut structure_rng = rng_from_seed(777);
    let mut class_bins: Vec<Vec<usize>> = Vec::new();
    for _ in 0..k {
        class_bins.push((0..60).map(|_| structure_rng.random_range(0..d)).collect());
    }
    let mut rng = rng_from_seed(seed);
    let mut data = Array2::zeros((m, d));
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let class = i % k;
        labels.push(class as u16);
        for j in 0..d {
            data[(i, j)] = (base + rng.random_range(-sigma..sigma)).max(0.0);
        }
        for &b in &class_bins[class] {
            data[(i, b)] += delta;
        }
    }
    (data, labels)
}

fn accuracy_mlp(model: &mlp::MlpModel, data: &Array2<f64>, labels: &[u16]) -> f64 {
    let mut correct = 0;
    for (i, &l) in labels.iter().enumerate() {
        if model.predict(data.row(i).as_slice().unwrap()).unwrap() == usize::from(l) {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let base: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let sigma: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.03);
    let d = 2049;
    let k = 9;
    let m = 1800;

    for delta in [0.01, 0.03, 0.1, 0.3] {
        let (train, train_labels) = make_data(1, m, d, k, delta, sigma, base);
        let (test, test_labels) = make_data(2, 900, d, k, delta, sigma, base);

        let sm_cfg = TrainConfig {
            epochs: 300,
            ..TrainConfig::for_softmax()
        };
        let (sm, costs) = softmax::train(train.view(), &train_labels, k, &sm_cfg).unwrap();
        let rises = costs.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
        let mut correct = 0;
        for (i, &l) in test_labels.iter().enumerate() {
            let p = sm.predict(test.row(i).as_slice().unwrap()).unwrap();
            if deviceprint::learn::argmax(&p) == usize::from(l) {
                correct += 1;
            }
        }
        println!(
            "delta={delta}: softmax acc={:.3} rises={rises} Jend={:.4}",
            correct as f64 / 900.0,
            costs.last().unwrap()
        );

        for (lr, epochs, loss) in [
            (0.5, 30, MlpLoss::SquaredError),
            (2.0, 30, MlpLoss::SquaredError),
            (0.5, 30, MlpLoss::CrossEntropy),
            (2.0, 30, MlpLoss::CrossEntropy),
        ] {
            let cfg = TrainConfig {
                epochs,
                learning_rate: lr,
                ..TrainConfig::default()
            };
            let sizes = [d, 256, 256, 256, k];
            let model =
                mlp::train_with_loss(train.view(), &train_labels, &sizes, &cfg, loss).unwrap();
            println!(
                "  mlp-3 lr={lr} {loss:?}: test={:.3} train={:.3}",
                accuracy_mlp(&model, &test, &test_labels),
                accuracy_mlp(&model, &train, &train_labels),
            );
        }
    }
}
