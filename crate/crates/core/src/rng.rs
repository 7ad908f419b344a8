//! Seeded random streams.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rand = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rand {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream derived from `seed` and a label, so that adding draws
/// to one stream never shifts another.
pub fn stream(seed: u64, label: u64) -> Rand {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

pub fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}
