//! Exact 2-Wasserstein distance and entropic Gromov-Wasserstein discrepancy.

mod assignment;
mod gw;

pub use assignment::linear_assignment;
pub use gw::{gw_entropic, gw_objective, GwOptions, GwResult, GwScale};

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::graph::sq_dist;
use crate::rng::stream;

/// Weighted point set; weights are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Array2<f64>,
    pub weights: Array1<f64>,
}

impl PointCloud {
    pub fn uniform(points: Array2<f64>) -> Self {
        let m = points.nrows();
        Self { points, weights: Array1::from_elem(m, 1.0 / m.max(1) as f64) }
    }

    pub fn weighted(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        if weights.len() != points.nrows() {
            return Err(Error::shape("point_cloud", format!("{} weights for {} points", weights.len(), points.nrows())));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("weights must be non-negative and sum to 1".into()));
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Pairwise Euclidean distances.
    pub fn distances(&self) -> Array2<f64> {
        let m = self.len();
        let mut d = Array2::zeros((m, m));
        for i in 0..m {
            for j in i + 1..m {
                let v = sq_dist(self.points.row(i), self.points.row(j)).sqrt();
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        d
    }
}

/// `sqrt(min_π (1/m) Σ ‖a_i - b_π(i)‖²)` over permutations, for equal-size clouds.
pub fn w2_exact(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape("w2_exact", format!("{} vs {} points", a.nrows(), b.nrows())));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::shape("w2_exact", format!("{}-d vs {}-d points", a.ncols(), b.ncols())));
    }
    let m = a.nrows();
    if m == 0 {
        return Ok(0.0);
    }
    let cost = Array2::from_shape_fn((m, m), |(i, j)| sq_dist(a.row(i), b.row(j)));
    let pi = linear_assignment(&cost);
    // Summing sorted terms makes the result independent of argument order.
    let mut terms: Vec<f64> = pi.iter().enumerate().map(|(i, &j)| cost[[i, j]]).collect();
    terms.sort_by(f64::total_cmp);
    Ok((terms.iter().sum::<f64>() / m as f64).sqrt())
}

/// Result of the pooled subsample protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledW2 {
    pub mean: f64,
    pub std: f64,
    pub replicates: Vec<f64>,
    pub subsample: usize,
    /// Set when a side had fewer points than requested.
    pub used_all: bool,
}

/// Pools all rows of each side, draws `replicates` uniform subsamples of
/// `size` rows per side without replacement and averages [`w2_exact`].
pub fn w2_pooled(
    gen: &[&Array2<f64>],
    reference: &[&Array2<f64>],
    size: usize,
    replicates: usize,
    seed: u64,
) -> Result<PooledW2> {
    let pool = |parts: &[&Array2<f64>]| -> Result<Array2<f64>> {
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        if views.is_empty() {
            return Err(Error::InvalidArgument("no graphs to pool".into()));
        }
        ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape("w2_pooled", e.to_string()))
    };
    let (a, b) = (pool(gen)?, pool(reference)?);
    let avail = a.nrows().min(b.nrows());
    let m = size.min(avail);
    let used_all = m < size;
    if replicates == 0 || m == 0 {
        return Err(Error::InvalidArgument("need at least one replicate and one point".into()));
    }
    let mut values = Vec::with_capacity(replicates);
    for rep in 0..replicates {
        let mut rng = stream(seed, rep as u64);
        let ia = sample(&mut rng, a.nrows(), m).into_vec();
        // Equal pools share the draw, so identical inputs give exactly zero.
        let ib = if b.nrows() == a.nrows() { ia.clone() } else { sample(&mut rng, b.nrows(), m).into_vec() };
        values.push(w2_exact(&a.select(Axis(0), &ia), &b.select(Axis(0), &ib))?);
    }
    let mean = values.iter().sum::<f64>() / replicates as f64;
    let std = if replicates > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (replicates - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(PooledW2 { mean, std, replicates: values, subsample: m, used_all })
}
