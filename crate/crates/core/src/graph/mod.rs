//! Geometric graphs: features, positions and directed edges.

mod edges;
mod io;
mod voxel;

pub use edges::{build_complete_edges, build_knn_edges, build_long_short_edges, build_radius_edges};
pub use io::{graph_to_string, parse_graph, read_graph, write_graph};
pub use voxel::{identity_assignment, pool, voxel_coarsen, voxels_per_axis, CoarseAssignment, Pooling};

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Directed edge `(source, target)`; messages flow from source to target.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGraph {
    /// `N x f`, `f` may be zero.
    pub features: Array2<f64>,
    /// `N x d` with `d` in 1..=3.
    pub positions: Array2<f64>,
    pub edges: Vec<Edge>,
}

impl GeometricGraph {
    pub fn new(features: Array2<f64>, positions: Array2<f64>, edges: Vec<Edge>) -> Result<Self> {
        let g = Self { features, positions, edges };
        g.validate()?;
        Ok(g)
    }

    /// A graph with positions only and no edges.
    pub fn from_positions(positions: Array2<f64>) -> Result<Self> {
        let n = positions.nrows();
        Self::new(Array2::zeros((n, 0)), positions, Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.nrows();
        if self.features.nrows() != n {
            return Err(Error::shape("graph", format!("{} feature rows for {n} nodes", self.features.nrows())));
        }
        let d = self.positions.ncols();
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidArgument(format!("position dimension {d} not in 1..=3")));
        }
        if self.positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite position".into()));
        }
        if let Some(&(s, t)) = self.edges.iter().find(|&&(s, t)| s >= n || t >= n) {
            return Err(Error::InvalidArgument(format!("edge ({s}, {t}) outside [0, {n})")));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn centroid(&self) -> ndarray::Array1<f64> {
        self.positions.mean_axis(Axis(0)).unwrap_or_else(|| ndarray::Array1::zeros(self.dim()))
    }

    /// Relabels node `i` as `perm[i]`, moving rows and edges accordingly.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.num_nodes();
        assert_eq!(perm.len(), n);
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut positions = Array2::zeros(self.positions.raw_dim());
        for (i, &p) in perm.iter().enumerate() {
            features.row_mut(p).assign(&self.features.row(i));
            positions.row_mut(p).assign(&self.positions.row(i));
        }
        let edges = self.edges.iter().map(|&(s, t)| (perm[s], perm[t])).collect();
        Self { features, positions, edges }
    }
}

pub(crate) fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}
