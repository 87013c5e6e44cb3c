//! Shared fixtures for the criterion benchmarks in `benches/`.

use mtpp_core::{simulate_hawkes, Dataset, HawkesConfig};

/// Two-mark cross-exciting process on `[0, horizon]`.
pub fn hawkes(horizon: f64) -> HawkesConfig {
    HawkesConfig::new(
        vec![0.5, 0.5],
        vec![vec![0.2, 0.6], vec![0.6, 0.2]],
        vec![vec![1.5; 2]; 2],
        horizon,
    )
    .expect("stable process")
}

/// `n` sequences from [`hawkes`] with horizon 10.
pub fn dataset(n: usize, seed: u64) -> Dataset {
    simulate_hawkes(&hawkes(10.0), n, seed).expect("simulation")
}
