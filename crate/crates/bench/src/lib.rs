//! Fixtures shared by the benchmarks.

use ncgn_core::GeometricGraph;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points uniform in the unit cube of dimension `d`.
pub fn cloud(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.gen_range(-0.5..0.5))
}

/// A random graph with `f` feature channels and no edges.
pub fn graph(n: usize, d: usize, f: usize, seed: u64) -> GeometricGraph {
    let features = cloud(n, f, seed ^ 0x5eed);
    GeometricGraph::new(features, cloud(n, d, seed), Vec::new()).expect("consistent shapes")
}
