//! Shared fixtures for the criterion benchmarks.

use ml_locality::data::generate_blobs;
use ml_locality::trace::{AccessTrace, ObjectId};
use ml_locality::{rng, Dataset};
use rand::Rng;

/// Gaussian blobs with class `c` offset by `separation` on the features
/// `i` with `i mod n_classes = c`.
pub fn blobs(n_per_class: usize, n_classes: usize, n_features: usize, separation: f64, seed: u64) -> Dataset {
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|c| {
            (0..n_features)
                .map(|i| if i % n_classes == c { separation } else { 0.0 })
                .collect()
        })
        .collect();
    generate_blobs(n_per_class, n_classes, n_features, &centers, 1.0, seed).expect("valid blob parameters")
}

/// Uniform random reads over `universe` elements of one object.
pub fn random_trace(len: usize, universe: u64, seed: u64) -> AccessTrace {
    let mut r = rng::from_seed(seed);
    let mut t = AccessTrace::new();
    for _ in 0..len {
        t.read(ObjectId::TRAIN_SET, r.random_range(0..universe));
    }
    t
}
