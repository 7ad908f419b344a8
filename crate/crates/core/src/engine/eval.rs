//! Distributional metrics over sets of graphs.

use ndarray::{concatenate, Array2, Axis};

use crate::dmp::Task;
use crate::error::{Error, Result};
use crate::graph::GeometricGraph;
use crate::transport::{w2_pooled, PooledW2};

pub const W2_SUBSAMPLE: usize = 1024;
pub const W2_REPLICATES: usize = 5;

/// Rows compared by the metric: positions for position generation,
/// `[position | feature]` for feature generation.
pub fn eval_space(g: &GeometricGraph, task: Task) -> Array2<f64> {
    match task {
        Task::Positions => g.positions.clone(),
        Task::Features => concatenate(Axis(1), &[g.positions.view(), g.features.view()]).expect("row counts agree"),
    }
}

/// Pooled-subsample 2-Wasserstein distance between two sets of graphs.
pub fn evaluate_w2(generated: &[GeometricGraph], reference: &[GeometricGraph], task: Task, seed: u64) -> Result<PooledW2> {
    evaluate_w2_with(generated, reference, task, W2_SUBSAMPLE, W2_REPLICATES, seed)
}

pub fn evaluate_w2_with(
    generated: &[GeometricGraph],
    reference: &[GeometricGraph],
    task: Task,
    size: usize,
    replicates: usize,
    seed: u64,
) -> Result<PooledW2> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument("both sides need at least one graph".into()));
    }
    if generated.len() < 100 || reference.len() < 100 {
        log::warn!("W2 on {} vs {} graphs; at least 100 per side is recommended", generated.len(), reference.len());
    }
    let a: Vec<Array2<f64>> = generated.iter().map(|g| eval_space(g, task)).collect();
    let b: Vec<Array2<f64>> = reference.iter().map(|g| eval_space(g, task)).collect();
    let ra: Vec<&Array2<f64>> = a.iter().collect();
    let rb: Vec<&Array2<f64>> = b.iter().collect();
    let r = w2_pooled(&ra, &rb, size, replicates, seed)?;
    if r.used_all {
        log::warn!("fewer than {size} points on one side; used all {}", r.subsample);
    }
    Ok(r)
}
