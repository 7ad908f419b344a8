use std::collections::BTreeMap;

use ndarray::{Array2, Axis};

use super::GeometricGraph;
use crate::error::{Error, Result};

/// Mapping from original nodes to coarse nodes plus the coarse geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseAssignment {
    pub cluster_of: Vec<usize>,
    pub coarse_positions: Array2<f64>,
    pub coarse_features: Array2<f64>,
    pub n_clusters: usize,
}

impl CoarseAssignment {
    /// Builds the assignment and mean-pools positions and features.
    pub fn from_clusters(graph: &GeometricGraph, cluster_of: Vec<usize>, n_clusters: usize) -> Self {
        let coarse_positions = pool(&graph.positions, &cluster_of, n_clusters, Pooling::Mean);
        let coarse_features = pool(&graph.features, &cluster_of, n_clusters, Pooling::Mean);
        Self { cluster_of, coarse_positions, coarse_features, n_clusters }
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_clusters];
        for &k in &self.cluster_of {
            c[k] += 1;
        }
        c
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_clusters];
        for (i, &k) in self.cluster_of.iter().enumerate() {
            m[k].push(i);
        }
        m
    }

    pub fn is_identity(&self) -> bool {
        self.n_clusters == self.cluster_of.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    /// Coordinate-wise maximum over members.
    Max,
}

impl std::str::FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(Error::InvalidArgument(format!("unknown pooling `{other}` (expected mean or max)"))),
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Max => "max",
        })
    }
}

/// Pools the rows of `values` into `n` groups.
pub fn pool(values: &Array2<f64>, cluster_of: &[usize], n: usize, how: Pooling) -> Array2<f64> {
    let c = values.ncols();
    match how {
        Pooling::Mean => {
            let mut out = Array2::zeros((n, c));
            let mut counts = vec![0usize; n];
            for (row, &k) in values.outer_iter().zip(cluster_of) {
                let mut o = out.row_mut(k);
                o += &row;
                counts[k] += 1;
            }
            for (mut row, &cnt) in out.outer_iter_mut().zip(&counts) {
                if cnt > 0 {
                    row /= cnt as f64;
                }
            }
            out
        }
        Pooling::Max => {
            let mut out = Array2::from_elem((n, c), f64::NEG_INFINITY);
            for (row, &k) in values.outer_iter().zip(cluster_of) {
                for (o, &v) in out.row_mut(k).iter_mut().zip(row) {
                    *o = o.max(v);
                }
            }
            out.mapv_inplace(|v| if v == f64::NEG_INFINITY { 0.0 } else { v });
            out
        }
    }
}

/// Largest `p` with `p^d <= s`, so a full voxel grid never exceeds `s` cells.
pub fn voxels_per_axis(s: usize, d: usize) -> usize {
    let mut p = 1usize;
    while (p + 1).checked_pow(d as u32).is_some_and(|v| v <= s) {
        p += 1;
    }
    p
}

/// Voxel clustering into at most `s` clusters.
///
/// Each axis spans `[min, max]` of the node positions and is cut into `p` equal
/// bins, the last one closed; a degenerate axis gets a single bin. Occupied
/// voxels become clusters numbered in lexicographic order of their voxel index,
/// so the numbering does not depend on node order.
pub fn voxel_coarsen(graph: &GeometricGraph, s: usize) -> Result<CoarseAssignment> {
    let n = graph.num_nodes();
    if s == 0 {
        return Err(Error::InvalidArgument("cluster count must be positive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cannot coarsen an empty graph".into()));
    }
    let d = graph.dim();
    let p = voxels_per_axis(s, d);
    let lo = graph.positions.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
    let hi = graph.positions.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
    let keys: Vec<Vec<usize>> = graph
        .positions
        .outer_iter()
        .map(|row| {
            (0..d)
                .map(|j| {
                    let span = hi[j] - lo[j];
                    if span <= 0.0 || p == 1 {
                        0
                    } else {
                        (((row[j] - lo[j]) / span * p as f64).floor() as usize).min(p - 1)
                    }
                })
                .collect()
        })
        .collect();
    let mut ids: BTreeMap<&[usize], usize> = keys.iter().map(|k| (k.as_slice(), 0)).collect();
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let cluster_of: Vec<usize> = keys.iter().map(|k| ids[k.as_slice()]).collect();
    Ok(CoarseAssignment::from_clusters(graph, cluster_of, ids.len()))
}

/// One cluster per node, in node order.
pub fn identity_assignment(graph: &GeometricGraph) -> CoarseAssignment {
    let n = graph.num_nodes();
    CoarseAssignment {
        cluster_of: (0..n).collect(),
        coarse_positions: graph.positions.clone(),
        coarse_features: graph.features.clone(),
        n_clusters: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_count_is_integer_root_floor() {
        assert_eq!(voxels_per_axis(8, 3), 2);
        assert_eq!(voxels_per_axis(27, 3), 3);
        assert_eq!(voxels_per_axis(26, 3), 2);
        assert_eq!(voxels_per_axis(100, 2), 10);
        assert_eq!(voxels_per_axis(1, 2), 1);
        assert_eq!(voxels_per_axis(5, 1), 5);
    }

    #[test]
    fn square_corners_are_singletons() {
        let g = GeometricGraph::from_positions(array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        let a = voxel_coarsen(&g, 4).unwrap();
        assert_eq!(a.n_clusters, 4);
        let mut rows: Vec<Vec<f64>> = a.coarse_positions.outer_iter().map(|r| r.to_vec()).collect();
        rows.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn single_cluster_is_centroid() {
        let g = GeometricGraph::new(array![[1.0], [3.0], [5.0]], array![[0.0, 0.0], [3.0, 1.0], [0.0, 2.0]], vec![]).unwrap();
        let a = voxel_coarsen(&g, 1).unwrap();
        assert_eq!(a.n_clusters, 1);
        assert_eq!(a.coarse_positions, array![[1.0, 1.0]]);
        assert_eq!(a.coarse_features, array![[3.0]]);
    }

    #[test]
    fn line_split_at_midpoint() {
        let g = GeometricGraph::from_positions(array![[0.0], [0.1], [0.9], [1.0]]).unwrap();
        let a = voxel_coarsen(&g, 2).unwrap();
        assert_eq!(a.cluster_of, vec![0, 0, 1, 1]);
        assert!((a.coarse_positions[[0, 0]] - 0.05).abs() < 1e-15);
        assert!((a.coarse_positions[[1, 0]] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn degenerate_axis_gets_one_bin() {
        let g = GeometricGraph::from_positions(array![[0.0, 2.0], [1.0, 2.0], [0.2, 2.0]]).unwrap();
        let a = voxel_coarsen(&g, 4).unwrap();
        assert_eq!(a.n_clusters, 2);
        assert_eq!(a.cluster_of, vec![0, 1, 0]);
    }

    #[test]
    fn max_pooling_takes_coordinate_max() {
        let v = array![[0.0, 5.0], [2.0, 1.0], [7.0, 7.0]];
        assert_eq!(pool(&v, &[0, 0, 1], 2, Pooling::Max), array![[2.0, 5.0], [7.0, 7.0]]);
    }

    proptest! {
        #[test]
        fn clusters_partition_nodes_and_means_match(seed in 0u64..500, n in 1usize..60, s in 1usize..40, d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pos = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
            let feat = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
            let g = GeometricGraph::new(feat, pos, vec![]).unwrap();
            let a = voxel_coarsen(&g, s).unwrap();
            prop_assert!(a.n_clusters <= s);
            prop_assert_eq!(a.counts().iter().sum::<usize>(), n);
            prop_assert!(a.counts().iter().all(|&c| c > 0));
            for (k, members) in a.members().iter().enumerate() {
                for j in 0..d {
                    let m: f64 = members.iter().map(|&i| g.positions[[i, j]]).sum::<f64>() / members.len() as f64;
                    prop_assert!((m - a.coarse_positions[[k, j]]).abs() < 1e-12);
                }
                for j in 0..2 {
                    let m: f64 = members.iter().map(|&i| g.features[[i, j]]).sum::<f64>() / members.len() as f64;
                    prop_assert!((m - a.coarse_features[[k, j]]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn fine_enough_grid_is_identity_on_a_lattice(p in 1usize..6, d in 1usize..4, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = p.pow(d as u32);
            let pos = Array2::from_shape_fn((n, d), |(i, j)| {
                let coord = (i / p.pow(j as u32)) % p;
                coord as f64 + rng.gen_range(-0.1..0.1) / p as f64
            });
            let g = GeometricGraph::from_positions(pos).unwrap();
            let a = voxel_coarsen(&g, n).unwrap();
            prop_assert_eq!(a.n_clusters, n);
        }
    }
}
