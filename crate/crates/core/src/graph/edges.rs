use std::cmp::Ordering;

use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sq_dist, Edge};

fn by_dist_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Every node receives edges from its `min(k, N-1)` nearest other nodes.
///
/// Equal distances are resolved toward the lower node index. Edges are grouped
/// by target, nearest source first.
pub fn build_knn_edges(positions: &Array2<f64>, k: usize) -> Vec<Edge> {
    let n = positions.nrows();
    let k = k.min(n.saturating_sub(1));
    if k == 0 {
        return Vec::new();
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        let pi = positions.row(i);
        cand.extend((0..n).filter(|&j| j != i).map(|j| (sq_dist(pi, positions.row(j)), j)));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_dist_then_index);
            cand.truncate(k);
        }
        cand.sort_by(by_dist_then_index);
        edges.extend(cand.iter().map(|&(_, j)| (j, i)));
    }
    edges
}

/// All ordered pairs of distinct nodes.
pub fn build_complete_edges(n: usize) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1));
    for t in 0..n {
        edges.extend((0..n).filter(|&s| s != t).map(|s| (s, t)));
    }
    edges
}

/// Every node receives edges from `min(k, N-1)` distinct uniformly drawn other nodes.
pub fn build_long_short_edges(n: usize, k: usize, seed: u64) -> Vec<Edge> {
    let k = k.min(n.saturating_sub(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(n * k);
    for t in 0..n {
        let mut picks: Vec<usize> =
            index::sample(&mut rng, n - 1, k).into_iter().map(|s| if s >= t { s + 1 } else { s }).collect();
        picks.sort_unstable();
        edges.extend(picks.into_iter().map(|s| (s, t)));
    }
    edges
}

/// Ordered pairs of distinct nodes at distance at most `radius`.
pub fn build_radius_edges(positions: &Array2<f64>, radius: f64) -> Vec<Edge> {
    let n = positions.nrows();
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for t in 0..n {
        for s in 0..n {
            if s != t && sq_dist(positions.row(s), positions.row(t)) <= r2 {
                edges.push((s, t));
            }
        }
    }
    edges
}
