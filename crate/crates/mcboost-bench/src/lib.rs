//! Deterministic synthetic inputs for the benchmarks: Gaussian-ish class
//! blobs for end-to-end training and a smooth nonlinear target for the tree
//! learner in isolation.

use mcboost::{Dataset, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n_per_class` samples per class around well-separated centers, with
/// uniform noise on every feature.
pub fn blobs(n_per_class: usize, n_classes: usize, n_features: usize, seed: u64) -> Dataset {
    let n = n_per_class * n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * n_features);
    let mut labels = Vec::with_capacity(n);
    for class in 0..n_classes {
        for _ in 0..n_per_class {
            for f in 0..n_features {
                let center = ((class + f) % n_classes) as f64 * 3.0;
                features.push(center + rng.gen_range(-1.0..1.0));
            }
            labels.push(class);
        }
    }
    let class_names = (0..n_classes).map(|c| c.to_string()).collect();
    Dataset::from_parts(
        Matrix::from_vec(features, n, n_features),
        labels,
        class_names,
    )
    .expect("valid synthetic dataset")
}

/// A smooth multi-feature target with noise, exercising realistic split
/// searches rather than the trivially separable case.
pub fn smooth_responses(data: &Dataset) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    (0..data.n())
        .map(|i| {
            let row = data.row(i);
            let signal: f64 = row
                .iter()
                .enumerate()
                .map(|(f, x)| (x * 0.7 + f as f64).sin())
                .sum();
            signal + rng.gen_range(-0.1..0.1)
        })
        .collect()
}
