//! Dense tensors with tape-based reverse-mode differentiation.

pub mod checkpoint;
pub mod nn;
pub mod tape;
pub mod tensor;

pub use nn::{apply_bn_updates, BatchNorm, BnId, BnState, BnUpdates, Linear, Mlp, Mode, Session};
pub use tape::{gelu, gelu_grad, segment_softmax_values, sigmoid, BatchStats, Tape, Var, BN_EPS, LEAKY_SLOPE};
pub use tensor::{ParamId, ParamStore, Tensor};

/// Central-difference derivative of a scalar function of a flat parameter
/// vector, used as a test oracle.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + h;
            let up = f(&work);
            work[i] = orig - h;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
