//! Dynamic message passing network and its fixed-graph baselines.

mod check;
mod layers;
mod model;
mod structure;

pub use check::{gradient_check, training_loss, GradCheck};
pub use layers::{gat_conv, gcn_conv, GatOutput};
pub use model::{DmpConfig, DmpModel, Trace};
pub use structure::{prepare, prepare_one, BatchStructure, StructureConfig};

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::graph::GeometricGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpKind {
    Gcn,
    Gat,
}

impl FromStr for MpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "gat" => Ok(Self::Gat),
            other => Err(Error::InvalidArgument(format!("unknown mp kind `{other}` (expected gcn or gat)"))),
        }
    }
}

impl fmt::Display for MpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gcn => "gcn",
            Self::Gat => "gat",
        })
    }
}

/// Which part of the graph is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Positions,
    Features,
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positions" => Ok(Self::Positions),
            "features" => Ok(Self::Features),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}` (expected positions or features)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Positions => "positions",
            Self::Features => "features",
        })
    }
}

impl Task {
    pub fn component<'g>(&self, g: &'g GeometricGraph) -> &'g Array2<f64> {
        match self {
            Self::Positions => &g.positions,
            Self::Features => &g.features,
        }
    }

    pub fn component_mut<'g>(&self, g: &'g mut GeometricGraph) -> &'g mut Array2<f64> {
        match self {
            Self::Positions => &mut g.positions,
            Self::Features => &mut g.features,
        }
    }

    pub fn out_dim(&self, g: &GeometricGraph) -> usize {
        self.component(g).ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    KnnFixed,
    FullyConnected,
    LongShort,
    RandomPred,
}

/// A network variant: noise-dependent structure or one of the fixed baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dmp,
    Baseline(BaselineKind),
}

impl Method {
    pub const NAMES: [&'static str; 5] = ["dmp", "knn_fixed", "fully_connected", "long_short", "random_pred"];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dmp => "dmp",
            Self::Baseline(BaselineKind::KnnFixed) => "knn_fixed",
            Self::Baseline(BaselineKind::FullyConnected) => "fully_connected",
            Self::Baseline(BaselineKind::LongShort) => "long_short",
            Self::Baseline(BaselineKind::RandomPred) => "random_pred",
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Self::Baseline(BaselineKind::RandomPred))
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dmp" => Self::Dmp,
            "knn_fixed" => Self::Baseline(BaselineKind::KnnFixed),
            "fully_connected" => Self::Baseline(BaselineKind::FullyConnected),
            "long_short" => Self::Baseline(BaselineKind::LongShort),
            "random_pred" => Self::Baseline(BaselineKind::RandomPred),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown method `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rows `[features | positions | t]`.
pub fn node_input(graph: &GeometricGraph, t: f64) -> Array2<f64> {
    let (n, f, d) = (graph.num_nodes(), graph.feature_dim(), graph.dim());
    let mut h = Array2::from_elem((n, f + d + 1), t);
    h.slice_mut(s![.., ..f]).assign(&graph.features);
    h.slice_mut(s![.., f..f + d]).assign(&graph.positions);
    h
}
