//! Shared fixtures for the benchmarks in `benches/`.

use sal_core::{Matrix, Method, Network, NetworkConfig, Prng};

/// Standard-normal batch with labels cycling through `classes`.
pub fn batch(rows: usize, cols: usize, classes: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = Prng::new(seed);
    let x = Matrix::from_fn(rows, cols, |_, _| rng.normal());
    (x, (0..rows).map(|i| i % classes).collect())
}

/// The two-layer MNIST-sized network used throughout the benchmarks.
pub fn mnist_network(method: Method, n_areas: usize) -> Network {
    Network::build(NetworkConfig::shallow(method, 784, 256, 10, n_areas), 1)
        .expect("valid benchmark network")
}
