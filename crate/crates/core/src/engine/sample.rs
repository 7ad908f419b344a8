//! Unconditional and mask-conditioned generation.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};

use super::generator::{with_component, Generator};
use crate::error::{Error, Result};
use crate::graph::GeometricGraph;
use crate::interpolant::generate;
use crate::rng::{normal_matrix, stream};

/// Per-node, per-channel known values of the generated component.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMask {
    pub known: Array2<bool>,
    pub values: Array2<f64>,
}

impl ConditionMask {
    pub fn new(known: Array2<bool>, values: Array2<f64>) -> Result<Self> {
        if known.dim() != values.dim() {
            return Err(Error::shape("condition_mask", format!("mask {:?} vs values {:?}", known.dim(), values.dim())));
        }
        if known.iter().zip(values.iter()).any(|(&k, v)| k && !v.is_finite()) {
            return Err(Error::InvalidArgument("known values must be finite".into()));
        }
        Ok(Self { known, values })
    }

    /// Every channel of the selected rows is known.
    pub fn rows(values: &Array2<f64>, rows: impl Fn(usize) -> bool) -> Self {
        let known = Array2::from_shape_fn(values.dim(), |(i, _)| rows(i));
        Self { known, values: values.clone() }
    }

    pub fn count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }
}

/// The conditional tasks of the spatiotemporal benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondTask {
    Unconditional,
    /// First timepoint known.
    Trajectory,
    /// First and last timepoints known.
    Interpolation,
    /// One gene unknown everywhere, the others known.
    GeneImputation {
        gene: usize,
    },
    /// The middle third of space unknown.
    SpaceImputation,
    /// One gene clamped to its knocked-out level, the others generated.
    GeneKnockout {
        gene: usize,
    },
}

impl CondTask {
    pub const NAMES: [&'static str; 6] =
        ["unconditional", "trajectory", "interpolation", "gene_imputation", "space_imputation", "gene_knockout"];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Unconditional => "unconditional",
            Self::Trajectory => "trajectory",
            Self::Interpolation => "interpolation",
            Self::GeneImputation { .. } => "gene_imputation",
            Self::SpaceImputation => "space_imputation",
            Self::GeneKnockout { .. } => "gene_knockout",
        }
    }

    /// Mask for a reference graph whose positions are `(time, space)` and whose
    /// features are genes. `knockout_level` is the normalized value of zero expression.
    pub fn mask(&self, reference: &GeometricGraph, knockout_level: f64) -> Result<Option<ConditionMask>> {
        let x = &reference.features;
        let col = |j: usize| reference.positions.column(j).to_owned();
        let bounds =
            |v: &ndarray::Array1<f64>| (v.fold(f64::INFINITY, |a, &b| a.min(b)), v.fold(f64::NEG_INFINITY, |a, &b| a.max(b)));
        let check_gene = |g: usize| {
            if g < x.ncols() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("gene index {g} out of range for {} genes", x.ncols())))
            }
        };
        if reference.dim() < 2 && !matches!(self, Self::Unconditional | Self::GeneImputation { .. } | Self::GeneKnockout { .. }) {
            return Err(Error::InvalidArgument(format!("task {} needs (time, space) positions", self.name())));
        }
        Ok(Some(match *self {
            Self::Unconditional => return Ok(None),
            Self::Trajectory => {
                let time = col(0);
                let (lo, _) = bounds(&time);
                ConditionMask::rows(x, |i| time[i] == lo)
            }
            Self::Interpolation => {
                let time = col(0);
                let (lo, hi) = bounds(&time);
                ConditionMask::rows(x, |i| time[i] == lo || time[i] == hi)
            }
            Self::SpaceImputation => {
                let space = col(1);
                let (lo, hi) = bounds(&space);
                let w = (hi - lo) / 3.0;
                ConditionMask::rows(x, |i| !(space[i] > lo + w && space[i] < hi - w))
            }
            Self::GeneImputation { gene } => {
                check_gene(gene)?;
                ConditionMask { known: Array2::from_shape_fn(x.dim(), |(_, j)| j != gene), values: x.clone() }
            }
            Self::GeneKnockout { gene } => {
                check_gene(gene)?;
                let mut values = x.clone();
                values.column_mut(gene).fill(knockout_level);
                ConditionMask { known: Array2::from_shape_fn(x.dim(), |(_, j)| j == gene), values }
            }
        }))
    }
}

impl fmt::Display for CondTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GeneImputation { gene } | Self::GeneKnockout { gene } => write!(f, "{}:{gene}", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for CondTask {
    type Err = Error;
    /// Gene tasks take an optional `:index` suffix (default 2, the last gene).
    fn from_str(s: &str) -> Result<Self> {
        let (name, gene) = match s.split_once(':') {
            Some((n, g)) => (n, g.parse().map_err(|_| Error::InvalidArgument(format!("invalid gene index in `{s}`")))?),
            None => (s, 2),
        };
        Ok(match name {
            "unconditional" => Self::Unconditional,
            "trajectory" => Self::Trajectory,
            "interpolation" => Self::Interpolation,
            "gene_imputation" => Self::GeneImputation { gene },
            "space_imputation" => Self::SpaceImputation,
            "gene_knockout" => Self::GeneKnockout { gene },
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown conditioning task `{s}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

fn clamp(z: &mut Array2<f64>, z0: &Array2<f64>, masks: &[(usize, &ConditionMask)], gen: &Generator, t: f64) {
    for &(off, m) in masks {
        for ((i, j), &k) in m.known.indexed_iter() {
            if k {
                z[[off + i, j]] = gen.interpolant.clean_path(z0[[off + i, j]], m.values[[i, j]], t);
            }
        }
    }
}

/// One generated graph per template. Templates supply node counts and the
/// component that is held fixed; `masks` (one per template) clamp known
/// coordinates to their noise-free path after every integration step.
pub fn sample(
    gen: &Generator,
    templates: &[GeometricGraph],
    masks: Option<&[ConditionMask]>,
    nfes: usize,
    batch: usize,
    seed: u64,
) -> Result<Vec<GeometricGraph>> {
    if let Some(m) = masks {
        if m.len() != templates.len() {
            return Err(Error::shape("sample", format!("{} masks for {} templates", m.len(), templates.len())));
        }
        for (g, mask) in templates.iter().zip(m) {
            let want = gen.task.component(g).dim();
            if mask.known.dim() != want {
                return Err(Error::shape("sample", format!("mask {:?} for a {:?} component", mask.known.dim(), want)));
            }
        }
    }
    let mut out = Vec::with_capacity(templates.len());
    for (c, chunk) in templates.chunks(batch.max(1)).enumerate() {
        let start = c * batch.max(1);
        let mut rng = stream(seed, c as u64);
        let blocks: Vec<Array2<f64>> = chunk
            .iter()
            .map(|g| {
                let comp = gen.task.component(g);
                normal_matrix(&mut rng, comp.nrows(), comp.ncols())
            })
            .collect();
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        let z0 = concatenate(Axis(0), &views).map_err(|e| Error::shape("sample", e.to_string()))?;
        let mut offs = Vec::with_capacity(chunk.len());
        let mut off = 0;
        for g in chunk {
            offs.push(off);
            off += g.num_nodes();
        }
        let chunk_masks: Vec<(usize, &ConditionMask)> =
            masks.map(|m| offs.iter().copied().zip(&m[start..start + chunk.len()]).collect()).unwrap_or_default();
        let z = if gen.model.is_none() {
            let mut z = z0.clone();
            clamp(&mut z, &z0, &chunk_masks, gen, 1.0);
            z
        } else {
            generate(
                |z, t| gen.field(chunk, z, t),
                z0.clone(),
                &gen.interpolant,
                nfes,
                &mut rng,
                |z, t| clamp(z, &z0, &chunk_masks, gen, t),
            )?
        };
        out.extend(with_component(chunk, &z, gen.task)?);
    }
    Ok(out)
}
