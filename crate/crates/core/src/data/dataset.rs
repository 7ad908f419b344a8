//! Dataset assembly and on-disk layout: `train/*.graph`, `test/*.graph`, `manifest`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::rd::{simulate_rd, RdParams};
use super::shapes::{make_shape, ShapeKind, ShapeSpec};
use crate::error::{Error, Result};
use crate::graph::{read_graph, write_graph, GeometricGraph};
use crate::rng::stream;

/// Evenly spaced indices `round(k (len − 1) / (n − 1))`, both ends included.
pub fn even_indices(len: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > len {
        return Err(Error::InvalidArgument(format!("cannot pick {n} evenly spaced indices out of {len}")));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    Ok((0..n).map(|k| ((k * (len - 1)) as f64 / (n - 1) as f64).round() as usize).collect())
}

/// Subsamples a `time x space x genes` trajectory into a graph with positions
/// `(time, space)` in [−0.5, 0.5] and raw gene values as features.
/// Nodes are time-major.
pub fn build_spatiotemporal_graph(traj: &Array3<f64>, n_space: usize, n_time: usize) -> Result<GeometricGraph> {
    let (tl, l, genes) = traj.dim();
    let ti = even_indices(tl, n_time)?;
    let si = even_indices(l, n_space)?;
    let coord = |i: usize, len: usize| if len > 1 { i as f64 / (len - 1) as f64 - 0.5 } else { 0.0 };
    let n = n_time * n_space;
    let mut positions = Array2::zeros((n, 2));
    let mut features = Array2::zeros((n, genes));
    for (a, &t) in ti.iter().enumerate() {
        for (b, &x) in si.iter().enumerate() {
            let row = a * n_space + b;
            positions[[row, 0]] = coord(t, tl);
            positions[[row, 1]] = coord(x, l);
            for g in 0..genes {
                features[[row, g]] = traj[[t, x, g]];
            }
        }
    }
    GeometricGraph::new(features, positions, Vec::new())
}

/// Per-channel min-max map onto [−0.5, 0.5].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit<'a>(mats: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Self> {
        let mut it = mats.into_iter().peekable();
        let c = it.peek().map(|m| m.ncols()).ok_or_else(|| Error::InvalidArgument("nothing to normalize".into()))?;
        let mut min = vec![f64::INFINITY; c];
        let mut max = vec![f64::NEG_INFINITY; c];
        for m in it {
            for row in m.rows() {
                for (j, &v) in row.iter().enumerate() {
                    min[j] = min[j].min(v);
                    max[j] = max[j].max(v);
                }
            }
        }
        Ok(Self { min, max })
    }

    fn range(&self, j: usize) -> f64 {
        let r = self.max[j] - self.min[j];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn normalize(&self, m: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(m.dim(), |(i, j)| (m[[i, j]] - self.min[j]) / self.range(j) - 0.5)
    }

    pub fn denormalize(&self, m: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(m.dim(), |(i, j)| (m[[i, j]] + 0.5) * self.range(j) + self.min[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<GeometricGraph>,
    pub test: Vec<GeometricGraph>,
    /// Free-form `key = value` metadata, written verbatim to `manifest`.
    pub manifest: BTreeMap<String, String>,
}

impl Dataset {
    pub fn kind(&self) -> Option<&str> {
        self.manifest.get("kind").map(String::as_str)
    }

    pub fn normalization(&self) -> Option<Normalization> {
        let list = |k: &str| -> Option<Vec<f64>> { self.manifest.get(k)?.split(',').map(|v| v.trim().parse().ok()).collect() };
        Some(Normalization { min: list("feature_min")?, max: list("feature_max")? })
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

pub struct RdDatasetConfig {
    pub params: RdParams,
    pub n_train: usize,
    pub n_test: usize,
    pub train_grid: (usize, usize),
    pub test_grid: (usize, usize),
    pub seed: u64,
}

impl Default for RdDatasetConfig {
    fn default() -> Self {
        Self { params: RdParams::default(), n_train: 10_000, n_test: 2_000, train_grid: (10, 10), test_grid: (8, 12), seed: 0 }
    }
}

/// One simulation per graph; features normalized with constants fitted on
/// both splits together.
pub fn make_rd_dataset(cfg: &RdDatasetConfig) -> Result<Dataset> {
    let total = cfg.n_train + cfg.n_test;
    let raw: Vec<GeometricGraph> = (0..total)
        .into_par_iter()
        .map(|i| {
            let seed = stream(cfg.seed, i as u64).gen::<u64>();
            let traj = simulate_rd(&cfg.params, seed)?;
            let (ns, nt) = if i < cfg.n_train { cfg.train_grid } else { cfg.test_grid };
            build_spatiotemporal_graph(&traj, ns, nt)
        })
        .collect::<Result<_>>()?;
    let norm = Normalization::fit(raw.iter().map(|g| &g.features))?;
    let mut graphs: Vec<GeometricGraph> = raw
        .into_iter()
        .map(|mut g| {
            g.features = norm.normalize(&g.features);
            g
        })
        .collect();
    let test = graphs.split_off(cfg.n_train);
    let mut manifest = BTreeMap::new();
    manifest.insert("kind".into(), "transcriptomics".into());
    manifest.insert("seed".into(), cfg.seed.to_string());
    manifest.insert("convention".into(), cfg.params.convention.name().into());
    manifest.insert("grid_size".into(), cfg.params.l.to_string());
    manifest.insert("dt".into(), cfg.params.dt.to_string());
    manifest.insert("t_end".into(), cfg.params.t_end.to_string());
    manifest.insert("train_grid".into(), format!("{}x{}", cfg.train_grid.0, cfg.train_grid.1));
    manifest.insert("test_grid".into(), format!("{}x{}", cfg.test_grid.0, cfg.test_grid.1));
    manifest.insert("feature_min".into(), join(&norm.min));
    manifest.insert("feature_max".into(), join(&norm.max));
    Ok(Dataset { train: graphs, test, manifest })
}

/// Shapes cycle through every kind; each graph gets its own seed.
pub fn make_shape_dataset(n_train: usize, n_test: usize, n_points: usize, seed: u64) -> Result<Dataset> {
    let make = |i: usize| {
        let kind = ShapeKind::ALL[i % ShapeKind::ALL.len()];
        make_shape(&ShapeSpec { kind, n_points, seed: stream(seed, i as u64).gen() })
    };
    let train = (0..n_train).map(make).collect::<Result<Vec<_>>>()?;
    let test = (n_train..n_train + n_test).map(make).collect::<Result<Vec<_>>>()?;
    let mut manifest = BTreeMap::new();
    manifest.insert("kind".into(), "shapes".into());
    manifest.insert("seed".into(), seed.to_string());
    manifest.insert("n_points".into(), n_points.to_string());
    Ok(Dataset { train, test, manifest })
}

pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    for (split, graphs) in [("train", &ds.train), ("test", &ds.test)] {
        let sub = dir.join(split);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (i, g) in graphs.iter().enumerate() {
            write_graph(&sub.join(format!("{i:06}.graph")), g)?;
        }
    }
    let mut text = String::new();
    let _ = writeln!(text, "train = {}", ds.train.len());
    let _ = writeln!(text, "test = {}", ds.test.len());
    for (k, v) in &ds.manifest {
        if k != "train" && k != "test" {
            let _ = writeln!(text, "{k} = {v}");
        }
    }
    let path = dir.join("manifest");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_split(dir: &Path, expected: usize) -> Result<Vec<GeometricGraph>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "graph")).collect();
    paths.sort();
    if paths.len() != expected {
        return Err(Error::InvalidArgument(format!("{} holds {} graphs, manifest says {expected}", dir.display(), paths.len())));
    }
    paths.iter().map(|p| read_graph(p)).collect()
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("manifest");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut manifest = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: i + 1,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        manifest.insert(k.trim().to_string(), v.trim().to_string());
    }
    let count = |k: &str| -> Result<usize> {
        manifest.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: 0,
            msg: format!("missing or invalid `{k}` count"),
        })
    };
    let (n_train, n_test) = (count("train")?, count("test")?);
    let train = read_split(&dir.join("train"), n_train)?;
    let test = read_split(&dir.join("test"), n_test)?;
    manifest.remove("train");
    manifest.remove("test");
    Ok(Dataset { train, test, manifest })
}

/// Concatenated rows of every graph, for pooled statistics.
pub fn stack_rows(mats: &[&Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
    ndarray::concatenate(Axis(0), &views).unwrap_or_else(|_| Array2::zeros((0, 0)))
}
