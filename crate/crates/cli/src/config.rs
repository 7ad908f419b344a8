//! Line-oriented `key = value` run configuration.
//!
//! Every key has a default. A config file overrides defaults and command-line
//! overrides win over the file. Values are validated and stored in canonical
//! text form, so `config.resolved` parses back to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ncgn_core::data::SignConvention;
use ncgn_core::dmp::{Method, MpKind, Task};
use ncgn_core::engine::CondTask;
use ncgn_core::graph::Pooling;
use ncgn_core::interpolant::InterpolantKind;
use ncgn_core::schedule::ScheduleKind;
use ncgn_core::transport::GwScale;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}: expected `key = value`, found `{text}`")]
    Syntax { source_name: String, line: usize, text: String },
    #[error("{source_name}: duplicate key `{key}`")]
    Duplicate { source_name: String, key: String },
    #[error("{source_name}: unknown key `{key}`")]
    Unknown { source_name: String, key: String },
    #[error("{source_name}: key `{key}`: {msg}")]
    Invalid { source_name: String, key: String, msg: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

type Check = fn(&str) -> Result<String, String>;

pub struct KeyDef {
    pub key: &'static str,
    pub default: &'static str,
    check: Check,
    pub help: &'static str,
}

fn int(v: &str) -> Result<String, String> {
    v.parse::<u64>().map(|x| x.to_string()).map_err(|_| format!("expected a non-negative integer, found `{v}`"))
}

fn positive(v: &str) -> Result<String, String> {
    match v.parse::<u64>() {
        Ok(x) if x > 0 => Ok(x.to_string()),
        _ => Err(format!("expected a positive integer, found `{v}`")),
    }
}

fn float(v: &str) -> Result<String, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x.to_string()),
        _ => Err(format!("expected a finite number, found `{v}`")),
    }
}

fn boolean(v: &str) -> Result<String, String> {
    v.parse::<bool>().map(|b| b.to_string()).map_err(|_| format!("expected true or false, found `{v}`"))
}

fn text(v: &str) -> Result<String, String> {
    if v.is_empty() {
        Err("expected a non-empty value".into())
    } else {
        Ok(v.to_string())
    }
}

fn parsed<T: FromStr + ToString>(v: &str) -> Result<String, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map(|x| x.to_string()).map_err(|e| e.to_string())
}

fn list<T: FromStr + ToString>(v: &str) -> Result<Vec<String>, String> {
    let items: Vec<&str> = v.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(format!("expected a comma-separated list, found `{v}`"));
    }
    items.iter().map(|s| s.parse::<T>().map(|x| x.to_string()).map_err(|_| format!("invalid list item `{s}`"))).collect()
}

fn int_list(v: &str) -> Result<String, String> {
    list::<usize>(v).map(|l| l.join(","))
}

fn float_list(v: &str) -> Result<String, String> {
    let l = list::<f64>(v)?;
    if l.iter().any(|x| !x.parse::<f64>().unwrap().is_finite()) {
        return Err(format!("non-finite entry in `{v}`"));
    }
    Ok(l.join(","))
}

fn grid(v: &str) -> Result<String, String> {
    let bad = || format!("expected `<space>x<time>`, found `{v}`");
    let (a, b) = v.split_once('x').ok_or_else(bad)?;
    let (a, b) = (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?);
    if a == 0 || b == 0 {
        return Err(bad());
    }
    Ok(format!("{a}x{b}"))
}

/// `auto` or a value accepted by `inner`.
fn auto_or(v: &str, inner: Check) -> Result<String, String> {
    if v == "auto" {
        Ok(v.into())
    } else {
        inner(v).map_err(|e| format!("{e} (or `auto`)"))
    }
}

fn auto_int(v: &str) -> Result<String, String> {
    auto_or(v, positive)
}

fn auto_float(v: &str) -> Result<String, String> {
    auto_or(v, float)
}

fn auto_text(v: &str) -> Result<String, String> {
    auto_or(v, text)
}

fn bounds(v: &str) -> Result<String, String> {
    auto_or(v, |v| {
        let l = list::<usize>(v)?;
        if l.len() == 4 {
            Ok(l.join(","))
        } else {
            Err("expected four values r0,r1,s0,s1".into())
        }
    })
}

fn interpolant(v: &str) -> Result<String, String> {
    match v.parse::<InterpolantKind>().map_err(|e| e.to_string())? {
        InterpolantKind::Ve => Err("the ve interpolant is for analysis only (expected cfm or ddpm)".into()),
        k => Ok(k.to_string()),
    }
}

fn weights(v: &str) -> Result<String, String> {
    match v {
        "ema" | "model" => Ok(v.into()),
        _ => Err(format!("expected ema or model, found `{v}`")),
    }
}

fn split(v: &str) -> Result<String, String> {
    match v {
        "train" | "test" => Ok(v.into()),
        _ => Err(format!("expected train or test, found `{v}`")),
    }
}

macro_rules! keys {
    ($( $key:literal = $default:literal, $check:expr, $help:literal; )*) => {
        pub const KEYS: &[KeyDef] = &[ $( KeyDef { key: $key, default: $default, check: $check, help: $help }, )* ];
    };
}

keys! {
    "out_dir" = "out", text, "directory for every artifact of a command";
    "seed" = "0", int, "seed of every random stream";
    "data.dir" = "data", text, "dataset directory read by training, sampling and the studies";

    "rd.n_train" = "10000", positive, "simulated training graphs";
    "rd.n_test" = "2000", positive, "simulated test graphs";
    "rd.train_grid" = "10x10", grid, "spatial x temporal points per training graph";
    "rd.test_grid" = "8x12", grid, "spatial x temporal points per test graph";
    "rd.k2" = "1", float, "reaction constant";
    "rd.k3" = "-1", float, "reaction constant";
    "rd.k4" = "1.27", float, "reaction constant";
    "rd.k5" = "-0.1", float, "bmp self-term";
    "rd.k7" = "1.59", float, "reaction constant";
    "rd.k9" = "-0.1", float, "wnt self-term";
    "rd.d_b" = "1", float, "bmp diffusion";
    "rd.d_w" = "2.5", float, "wnt diffusion";
    "rd.alpha_range" = "0.01", float, "half-width of the production field draws";
    "rd.init_range" = "0.01", float, "half-width of the initial field draws";
    "rd.l" = "100", positive, "grid points";
    "rd.dx" = "1", float, "grid spacing";
    "rd.dt" = "0.05", float, "time step";
    "rd.t_end" = "100", float, "simulated time";
    "rd.convention" = "printed", parsed::<SignConvention>, "sign of the k5 and k9 self-terms: printed or damped";

    "shapes.n_train" = "500", positive, "training shapes";
    "shapes.n_test" = "100", positive, "test shapes";
    "shapes.n_points" = "64", positive, "points per shape";

    "train.epochs" = "300", positive, "training epochs";
    "train.batch" = "128", positive, "graphs per optimizer step";
    "train.lr" = "0.001", float, "peak learning rate";
    "train.warmup_epochs" = "10", int, "linear warmup length in epochs";
    "train.ema_decay" = "0.95", float, "decay of the parameter average";

    "model.method" = "dmp", parsed::<Method>, "dmp, knn_fixed, fully_connected, long_short or random_pred";
    "model.mp_kind" = "gcn", parsed::<MpKind>, "gcn or gat";
    "model.task" = "features", parsed::<Task>, "generated component: positions or features";
    "model.hdim" = "32", positive, "hidden width";
    "model.layers" = "3", positive, "message passing layers";
    "model.baseline_k" = "auto", auto_int, "neighbor count of the fixed baselines";

    "interpolant.kind" = "cfm", interpolant, "cfm or ddpm";
    "interpolant.sigma_min" = "0.001", float, "terminal noise of flow matching";
    "interpolant.steps" = "1000", positive, "diffusion steps";
    "interpolant.beta_min" = "0.0001", float, "first diffusion beta";
    "interpolant.beta_max" = "0.02", float, "last diffusion beta";

    "schedule.kind" = "linear", parsed::<ScheduleKind>, "linear, exponential, logarithm or relu";
    "schedule.param" = "auto", auto_float, "rate of exponential and logarithm, knee of relu";
    "schedule.budget_mode" = "true", boolean, "derive the range from the edge budget";
    "schedule.bounds" = "auto", bounds, "r0,r1,s0,s1 or auto for per-graph defaults";

    "sample.checkpoint" = "auto", auto_text, "checkpoint to sample from; auto is out_dir/<weights>.ckpt";
    "sample.weights" = "ema", weights, "ema or model";
    "sample.split" = "test", split, "split whose graphs serve as templates and conditioning";
    "sample.n" = "0", int, "templates to use, 0 for all";
    "sample.task" = "unconditional", parsed::<CondTask>, "unconditional, trajectory, interpolation, gene_imputation[:i], space_imputation, gene_knockout[:i]";
    "sample.knockout_level" = "auto", auto_float, "clamped value of the knocked-out gene; auto is normalized zero";
    "sample.nfes" = "200", positive, "integration steps";
    "sample.batch" = "128", positive, "graphs integrated together";
    "sample.dir" = "auto", auto_text, "output directory; auto is out_dir/samples";

    "eval.generated" = "auto", auto_text, "generated graphs; auto is out_dir/samples";
    "eval.reference" = "auto", auto_text, "reference graphs; auto is data.dir/test";
    "eval.replicates" = "5", positive, "subsample replicates";
    "eval.subsample" = "1024", positive, "rows per subsample";

    "theory.snr_min" = "0.25", float, "smallest signal-to-noise ratio";
    "theory.snr_max" = "16", float, "largest signal-to-noise ratio";
    "theory.points" = "12", positive, "log-spaced ratios";

    "attention.epochs" = "50", positive, "training epochs of the attention network";
    "attention.batch" = "32", positive, "graphs per optimizer step";
    "attention.lr" = "0.001", float, "learning rate";
    "attention.hdim" = "32", positive, "hidden width";
    "attention.bins" = "10", positive, "distance bins";
    "attention.buckets" = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", float_list, "noise levels studied";
    "attention.n_graphs" = "100", positive, "test graphs studied";

    "gw.noise" = "1,0.9,0.7,0.5,0.3,0.1", float_list, "noise levels; 1 is the clean anchor";
    "gw.clusters" = "8,27,64", int_list, "requested cluster counts";
    "gw.pooling" = "mean", parsed::<Pooling>, "mean or max";
    "gw.target" = "positions", parsed::<Task>, "noised component";
    "gw.seeds" = "3", positive, "noise draws per graph";
    "gw.sigma_max" = "1", float, "noise scale";
    "gw.epsilon" = "0.05", float, "entropic regularization";
    "gw.iters" = "50", positive, "mirror descent steps";
    "gw.scale" = "each", parsed::<GwScale>, "distance rescaling: raw, each (own max) or joint (shared max)";
    "gw.n_graphs" = "20", positive, "training graphs studied";

    "ablate.depths" = "2,4,8,16", int_list, "layer counts of the depth sweep";
}

fn def(key: &str) -> Option<&'static KeyDef> {
    KEYS.iter().find(|d| d.key == key)
}

/// Validated configuration; every key is present.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|d| (d.key, d.default.to_string())).collect() }
    }
}

/// `key = value` pairs of one source, rejecting duplicates.
fn parse_lines<'a>(
    source_name: &str,
    lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vec<(String, String)>, ConfigError> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (no, raw) in lines {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { source_name: source_name.into(), line: no, text: raw.trim().into() });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { source_name: source_name.into(), line: no, text: raw.trim().into() });
        }
        if seen.insert(k.to_string(), ()).is_some() {
            return Err(ConfigError::Duplicate { source_name: source_name.into(), key: k.into() });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides` (each `key=value`).
    pub fn parse(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
            let name = path.display().to_string();
            cfg.apply(&name, parse_lines(&name, text.lines().enumerate().map(|(i, l)| (i + 1, l)))?)?;
        }
        let pairs = parse_lines("override", overrides.iter().enumerate().map(|(i, l)| (i + 1, l.as_str())))?;
        cfg.apply("override", pairs)?;
        Ok(cfg)
    }

    fn apply(&mut self, source_name: &str, pairs: Vec<(String, String)>) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            let d = def(&k).ok_or_else(|| ConfigError::Unknown { source_name: source_name.into(), key: k.clone() })?;
            let canon =
                (d.check)(&v).map_err(|msg| ConfigError::Invalid { source_name: source_name.into(), key: k.clone(), msg })?;
            self.values.insert(d.key, canon);
        }
        Ok(())
    }

    /// Sets one key, validating the value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.apply("set", vec![(key.to_string(), value.to_string())])
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).unwrap_or_else(|| panic!("config key `{key}` is not declared"))
    }

    pub fn is_auto(&self, key: &str) -> bool {
        self.get(key) == "auto"
    }

    /// Typed value of a key. Keys are validated on entry, so this only fails
    /// when the requested type disagrees with the key's declaration.
    pub fn value<T: FromStr>(&self, key: &str) -> T {
        self.get(key).parse().unwrap_or_else(|_| panic!("config key `{key}` read with the wrong type"))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Vec<T> {
        self.get(key)
            .split(',')
            .map(|s| s.parse().unwrap_or_else(|_| panic!("config key `{key}` read with the wrong type")))
            .collect()
    }

    pub fn grid(&self, key: &str) -> (usize, usize) {
        let (a, b) = self.get(key).split_once('x').expect("validated grid");
        (a.parse().expect("validated grid"), b.parse().expect("validated grid"))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.get(key))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.path("out_dir")
    }

    /// Every key in declaration order, one `key = value` line each.
    pub fn resolved(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for d in KEYS {
            let _ = writeln!(s, "{} = {}", d.key, self.get(d.key));
        }
        s
    }

    pub fn write_resolved(&self, dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("config.resolved");
        fs::write(&path, self.resolved())?;
        Ok(path)
    }
}

/// Usage lines describing every key.
pub fn key_help() -> String {
    let mut s = String::new();
    for d in KEYS {
        let _ = writeln!(s, "  {:<24} {:<12} {}", d.key, d.default, d.help);
    }
    s
}
