//! Noise-dependent structure of a batch: clusters and coarse edges.

use ndarray::{Array1, Array2};

use super::{node_input, BaselineKind, Method};
use crate::error::{Error, Result};
use crate::graph::{
    build_complete_edges, build_knn_edges, build_long_short_edges, identity_assignment, pool, voxel_coarsen, CoarseAssignment,
    Edge, GeometricGraph, Pooling,
};
use crate::schedule::{eval_schedule, SchedulePolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct StructureConfig {
    pub method: Method,
    pub schedule: SchedulePolicy,
    /// Neighbor count of the fixed kNN and long-short baselines; `None` uses
    /// the schedule's `r1` for the graph size.
    pub baseline_k: Option<usize>,
    pub seed: u64,
}

impl StructureConfig {
    pub fn new(method: Method) -> Self {
        Self { method, schedule: SchedulePolicy::default(), baseline_k: None, seed: 0 }
    }
}

/// Disjoint union of several graphs with their coarse structure.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStructure {
    /// `[features | positions | t]` per original node.
    pub h_in: Array2<f64>,
    pub positions: Array2<f64>,
    pub cluster_of: Vec<usize>,
    pub n_coarse: usize,
    pub coarse_positions: Array2<f64>,
    /// Member means of `h_in`.
    pub coarse_in: Array2<f64>,
    /// Directed edges between coarse nodes.
    pub edges: Vec<Edge>,
    /// `eta_i - coarse eta` of each node's own cluster.
    pub rel: Array2<f64>,
    /// Norm of `rel`, one column.
    pub dist: Array2<f64>,
    /// `1 / member count` per coarse node, one column.
    pub inv_count: Array2<f64>,
    /// Node ranges and coarse-node ranges of each graph.
    pub node_offsets: Vec<usize>,
    pub coarse_offsets: Vec<usize>,
}

impl BatchStructure {
    pub fn num_nodes(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn num_graphs(&self) -> usize {
        self.node_offsets.len() - 1
    }
}

fn graph_structure(g: &GeometricGraph, t: f64, cfg: &StructureConfig, index: usize) -> Result<(CoarseAssignment, Vec<Edge>)> {
    let n = g.num_nodes();
    let spec = cfg.schedule.spec_for(n);
    let k_fixed = cfg.baseline_k.unwrap_or(spec.r1);
    let (a, mut edges) = match cfg.method {
        Method::Dmp => {
            let (r, s) = eval_schedule(&spec, t, n)?;
            let a = voxel_coarsen(g, s)?;
            let edges = build_knn_edges(&a.coarse_positions, r);
            (a, edges)
        }
        Method::Baseline(kind) => {
            let edges = match kind {
                BaselineKind::KnnFixed => build_knn_edges(&g.positions, k_fixed),
                BaselineKind::FullyConnected => build_complete_edges(n),
                BaselineKind::LongShort => {
                    build_long_short_edges(n, k_fixed, cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(index as u64))
                }
                BaselineKind::RandomPred => Vec::new(),
            };
            (identity_assignment(g), edges)
        }
    };
    // A canonical order makes equal edge sets produce identical sums.
    edges.sort_unstable_by_key(|&(s, t)| (t, s));
    Ok((a, edges))
}

/// Structure of a single graph at noise level `t`.
pub fn prepare_one(g: &GeometricGraph, t: f64, cfg: &StructureConfig) -> Result<BatchStructure> {
    prepare(&[(g, t)], cfg)
}

/// Builds the disjoint union of `graphs`, each at its own noise level.
pub fn prepare(graphs: &[(&GeometricGraph, f64)], cfg: &StructureConfig) -> Result<BatchStructure> {
    let Some((first, _)) = graphs.first() else {
        return Err(Error::EmptyBatch);
    };
    let (d, f) = (first.dim(), first.feature_dim());
    let mut parts = Vec::with_capacity(graphs.len());
    let (mut n_total, mut s_total) = (0, 0);
    for (i, &(g, t)) in graphs.iter().enumerate() {
        if g.dim() != d || g.feature_dim() != f {
            return Err(Error::shape(
                "prepare",
                format!("graph {i} has layout d={} f={}, expected d={d} f={f}", g.dim(), g.feature_dim()),
            ));
        }
        if g.num_nodes() == 0 {
            return Err(Error::InvalidArgument(format!("graph {i} has no nodes")));
        }
        let (a, e) = graph_structure(g, t, cfg, i)?;
        n_total += g.num_nodes();
        s_total += a.n_clusters;
        parts.push((g, t, a, e));
    }
    let width = f + d + 1;
    let mut h_in = Array2::zeros((n_total, width));
    let mut positions = Array2::zeros((n_total, d));
    let mut coarse_positions = Array2::zeros((s_total, d));
    let mut coarse_in = Array2::zeros((s_total, width));
    let mut cluster_of = Vec::with_capacity(n_total);
    let mut edges = Vec::new();
    let mut counts = vec![0usize; s_total];
    let mut node_offsets = vec![0];
    let mut coarse_offsets = vec![0];
    let (mut no, mut so) = (0, 0);
    for (g, t, a, e) in parts {
        let n = g.num_nodes();
        let h = node_input(g, t);
        let ch = pool(&h, &a.cluster_of, a.n_clusters, Pooling::Mean);
        h_in.slice_mut(ndarray::s![no..no + n, ..]).assign(&h);
        positions.slice_mut(ndarray::s![no..no + n, ..]).assign(&g.positions);
        coarse_positions.slice_mut(ndarray::s![so..so + a.n_clusters, ..]).assign(&a.coarse_positions);
        coarse_in.slice_mut(ndarray::s![so..so + a.n_clusters, ..]).assign(&ch);
        for &c in &a.cluster_of {
            cluster_of.push(so + c);
            counts[so + c] += 1;
        }
        edges.extend(e.into_iter().map(|(s, t)| (so + s, so + t)));
        no += n;
        so += a.n_clusters;
        node_offsets.push(no);
        coarse_offsets.push(so);
    }
    let mut rel = positions.clone();
    for (mut row, &c) in rel.outer_iter_mut().zip(&cluster_of) {
        row -= &coarse_positions.row(c);
    }
    let dist = rel.map_axis(ndarray::Axis(1), |r| r.dot(&r).sqrt()).insert_axis(ndarray::Axis(1));
    let inv_count = Array1::from_iter(counts.iter().map(|&c| 1.0 / c as f64)).insert_axis(ndarray::Axis(1));
    Ok(BatchStructure {
        h_in,
        positions,
        cluster_of,
        n_coarse: s_total,
        coarse_positions,
        coarse_in,
        edges,
        rel,
        dist,
        inv_count,
        node_offsets,
        coarse_offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::default_bounds;
    use ndarray::array;

    #[test]
    fn union_offsets_clusters_and_edges() {
        let a = GeometricGraph::from_positions(array![[0.0], [1.0], [3.0]]).unwrap();
        let b = GeometricGraph::from_positions(array![[0.0], [0.5]]).unwrap();
        let cfg = StructureConfig::new(Method::Baseline(BaselineKind::FullyConnected));
        let s = prepare(&[(&a, 0.2), (&b, 0.9)], &cfg).unwrap();
        assert_eq!(s.num_nodes(), 5);
        assert_eq!(s.n_coarse, 5);
        assert_eq!(s.node_offsets, vec![0, 3, 5]);
        assert_eq!(s.edges.len(), 6 + 2);
        assert!(s.edges.iter().all(|&(x, y)| (x < 3) == (y < 3)));
        assert_eq!(s.h_in.column(1).to_vec(), vec![0.2, 0.2, 0.2, 0.9, 0.9]);
        assert!(s.rel.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dmp_edges_respect_schedule() {
        let pos = Array2::from_shape_fn((64, 2), |(i, j)| if j == 0 { (i % 8) as f64 } else { (i / 8) as f64 });
        let g = GeometricGraph::from_positions(pos).unwrap();
        let cfg = StructureConfig::new(Method::Dmp);
        let spec = default_bounds(64);
        for t in [0.0, 0.3, 0.7, 1.0] {
            let s = prepare_one(&g, t, &cfg).unwrap();
            let (r, st) = eval_schedule(&spec, t, 64).unwrap();
            assert!(s.n_coarse <= st);
            assert_eq!(s.edges.len(), s.n_coarse * r.min(s.n_coarse - 1));
            assert_eq!(s.inv_count.iter().map(|c| (1.0 / c).round()).sum::<f64>(), 64.0);
        }
    }

    #[test]
    fn mismatched_layouts_rejected() {
        let a = GeometricGraph::from_positions(array![[0.0], [1.0]]).unwrap();
        let b = GeometricGraph::from_positions(array![[0.0, 1.0]]).unwrap();
        assert!(prepare(&[(&a, 0.5), (&b, 0.5)], &StructureConfig::new(Method::Dmp)).is_err());
        assert!(prepare(&[], &StructureConfig::new(Method::Dmp)).is_err());
    }
}
