//! Attention-versus-distance and coarse-graining-versus-noise analyses.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::generator::Generator;
use crate::autodiff::{Mode, Session};
use crate::dmp::{prepare, Task};
use crate::error::{Error, Result};
use crate::graph::{pool, voxel_coarsen, GeometricGraph, Pooling};
use crate::interpolant::{interpolate, InterpolantSpec};
use crate::rng::{normal_matrix, stream};
use crate::transport::{gw_entropic, GwOptions, PointCloud};

pub const ATTENTION_BUCKETS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const GW_NOISE_GRID: [f64; 5] = [0.9, 0.7, 0.5, 0.3, 0.1];

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    pub t: f64,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStudy {
    pub rows: Vec<AttentionRow>,
    /// Per bucket: `Σ weight · bin center`.
    pub weighted_distance: Vec<(f64, f64)>,
}

fn max_pairwise(p: &Array2<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..p.nrows() {
        for j in i + 1..p.nrows() {
            let d = &p.row(i) - &p.row(j);
            m = m.max(d.dot(&d).sqrt());
        }
    }
    m
}

/// Mean attention per pair, binned by the distance between the clean
/// positions of the two endpoints and normalized per noise bucket.
///
/// Only the first attention layer is read. Coarse nodes of non-identity
/// clusterings are placed at their member mean.
pub fn attention_study(
    gen: &Generator,
    graphs: &[GeometricGraph],
    buckets: &[f64],
    bins: usize,
    batch: usize,
    seed: u64,
) -> Result<AttentionStudy> {
    let model = gen.model.as_ref().ok_or_else(|| Error::InvalidArgument("attention study needs a trained network".into()))?;
    if model.config.mp_kind != crate::dmp::MpKind::Gat {
        return Err(Error::InvalidArgument("attention study needs a gat network".into()));
    }
    if bins == 0 || graphs.is_empty() {
        return Err(Error::InvalidArgument("need at least one bin and one graph".into()));
    }
    let dmax = graphs.iter().map(|g| max_pairwise(&g.positions)).fold(0.0, f64::max);
    let width = if dmax > 0.0 { dmax / bins as f64 } else { 1.0 };
    let mut rows = Vec::new();
    let mut weighted = Vec::new();
    for (bi, &t) in buckets.iter().enumerate() {
        let mut sum = vec![0.0; bins];
        let mut count = vec![0usize; bins];
        for (c, chunk) in graphs.chunks(batch.max(1)).enumerate() {
            let mut rng = stream(seed, (bi * 1_000_003 + c) as u64);
            let noised = chunk
                .iter()
                .map(|g| {
                    let z1 = gen.task.component(g);
                    let z0 = normal_matrix(&mut rng, z1.nrows(), z1.ncols());
                    let mut h = g.clone();
                    *gen.task.component_mut(&mut h) = interpolate(&z0, z1, t, &gen.interpolant, &mut rng)?.z_t;
                    h.edges.clear();
                    Ok(h)
                })
                .collect::<Result<Vec<_>>>()?;
            let pairs: Vec<(&GeometricGraph, f64)> = noised.iter().map(|g| (g, t)).collect();
            let b = prepare(&pairs, &gen.structure)?;
            let mut sess = Session::new(&model.params, &model.bn, Mode::Eval);
            let (_, trace) = model.forward_traced(&mut sess, &b, true)?;
            let Some((edges, alpha)) = trace.attention.first() else { continue };
            let identity = b.n_coarse == b.num_nodes();
            let clean: Vec<_> = chunk.iter().map(|g| g.positions.view()).collect();
            let clean =
                ndarray::concatenate(ndarray::Axis(0), &clean).map_err(|e| Error::shape("attention_study", e.to_string()))?;
            let place = if identity { &clean } else { &b.coarse_positions };
            for (e, &(s, tg)) in edges.iter().enumerate() {
                if s == tg {
                    continue;
                }
                let d = &place.row(s) - &place.row(tg);
                let dist = d.dot(&d).sqrt();
                let k = ((dist / width) as usize).min(bins - 1);
                sum[k] += alpha[[e, 0]];
                count[k] += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
        let total: f64 = mean.iter().sum();
        let mut wd = 0.0;
        for (k, m) in mean.iter().enumerate() {
            let w = if total > 0.0 { m / total } else { 0.0 };
            let (lo, hi) = (k as f64 * width, (k + 1) as f64 * width);
            wd += w * 0.5 * (lo + hi);
            rows.push(AttentionRow { t, bin_lo: lo, bin_hi: hi, weight: w });
        }
        weighted.push((t, wd));
    }
    Ok(AttentionStudy { rows, weighted_distance: weighted })
}

#[derive(Debug, Clone)]
pub struct GwStudyConfig {
    /// Noise levels `t`; `1` is clean.
    pub noise: Vec<f64>,
    /// Requested cluster counts; values at or above the node count mean no coarsening.
    pub clusters: Vec<usize>,
    pub pooling: Pooling,
    pub target: Task,
    pub seeds: usize,
    pub sigma_max: f64,
    pub gw: GwOptions,
    pub seed: u64,
}

impl Default for GwStudyConfig {
    fn default() -> Self {
        Self {
            noise: GW_NOISE_GRID.to_vec(),
            clusters: vec![8, 27, 64],
            pooling: Pooling::Mean,
            target: Task::Positions,
            seeds: 3,
            sigma_max: 1.0,
            gw: GwOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwStudy {
    /// `(t, clusters, mean GW)`.
    pub rows: Vec<(f64, usize, f64)>,
    /// `(t, cluster count with the smallest mean)`; ties go to the smaller count.
    pub argmin: Vec<(f64, usize)>,
}

/// GW between the clean component and the coarse-grained noised one.
fn gw_cell(g: &GeometricGraph, noised: &GeometricGraph, clusters: usize, cfg: &GwStudyConfig) -> Result<f64> {
    let clean = PointCloud::uniform(cfg.target.component(g).clone());
    let comp = cfg.target.component(noised);
    let n = g.num_nodes();
    let coarse = if clusters >= n {
        PointCloud::uniform(comp.clone())
    } else {
        let a = voxel_coarsen(noised, clusters)?;
        let pooled = pool(comp, &a.cluster_of, a.n_clusters, cfg.pooling);
        let w = Array1::from_iter(a.counts().into_iter().map(|c| c as f64 / n as f64));
        PointCloud::weighted(pooled, w)?
    };
    Ok(gw_entropic(&clean, &coarse, &cfg.gw)?.value)
}

/// Noise with the variance-exploding path, coarse-grain by voxels, compare to
/// the clean graph, average over graphs and noise seeds.
pub fn gw_study(graphs: &[GeometricGraph], cfg: &GwStudyConfig) -> Result<GwStudy> {
    if graphs.is_empty() || cfg.clusters.is_empty() || cfg.noise.is_empty() || cfg.seeds == 0 {
        return Err(Error::InvalidArgument("gw study needs graphs, clusters, noise levels and seeds".into()));
    }
    let spec = InterpolantSpec::ve(cfg.sigma_max);
    let (nt, nc) = (cfg.noise.len(), cfg.clusters.len());
    let per_graph: Vec<Vec<f64>> = graphs
        .par_iter()
        .enumerate()
        .map(|(gi, g)| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; nt * nc];
            for s in 0..cfg.seeds {
                for (ti, &t) in cfg.noise.iter().enumerate() {
                    let mut rng = stream(cfg.seed, ((gi * cfg.seeds + s) * nt + ti) as u64);
                    let z1 = cfg.target.component(g);
                    let z0 = Array2::zeros(z1.raw_dim());
                    let mut noised = g.clone();
                    *cfg.target.component_mut(&mut noised) = interpolate(&z0, z1, t, &spec, &mut rng)?.z_t;
                    for (ci, &c) in cfg.clusters.iter().enumerate() {
                        acc[ti * nc + ci] += gw_cell(g, &noised, c, cfg)?;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let denom = (graphs.len() * cfg.seeds) as f64;
    let mut rows = Vec::with_capacity(nt * nc);
    let mut argmin = Vec::with_capacity(nt);
    for (ti, &t) in cfg.noise.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        let mut order: Vec<usize> = (0..nc).collect();
        order.sort_by_key(|&ci| cfg.clusters[ci]);
        for ci in order {
            let mean = per_graph.iter().map(|v| v[ti * nc + ci]).sum::<f64>() / denom;
            rows.push((t, cfg.clusters[ci], mean));
            if mean < best.0 {
                best = (mean, cfg.clusters[ci]);
            }
        }
        argmin.push((t, best.1));
    }
    Ok(GwStudy { rows, argmin })
}
