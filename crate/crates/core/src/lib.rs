//! Noise-conditioned graph networks with dynamic message passing.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod dmp;
pub mod engine;
pub mod error;
pub mod graph;
pub mod interpolant;
pub mod rng;
pub mod schedule;
pub mod theory;
pub mod transport;

pub use error::{Error, Result};
pub use graph::{CoarseAssignment, GeometricGraph};
