//! Shared fixtures for the benchmarks.

use drci_core::TabularDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows of uniform features in `[-1, 1]^d` with scores `|x₁| + U(0, 1)`.
pub fn fixture(n: usize, d: usize, seed: u64) -> TabularDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scores = (0..n).map(|i| features[i * d].abs() + rng.random::<f64>()).collect();
    TabularDataset::from_row_major(features, d, scores).expect("consistent fixture")
}
