//! One function per subcommand. Each returns the one-line summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array2;

use ncgn_core::autodiff::checkpoint;
use ncgn_core::data::{load_dataset, make_rd_dataset, make_shape_dataset, save_dataset, Dataset, RdDatasetConfig, RdParams};
use ncgn_core::dmp::{BaselineKind, Method, MpKind, Task};
use ncgn_core::engine::{
    attention_study, evaluate_w2_with, gw_study, sample, train, CondTask, ConditionMask, Generator, GwStudyConfig, LossRow,
    TrainConfig,
};
use ncgn_core::graph::{read_graph, write_graph, GeometricGraph};
use ncgn_core::interpolant::InterpolantSpec;
use ncgn_core::schedule::{ScheduleKind, SchedulePolicy};
use ncgn_core::theory::{log_grid, radius_table};
use ncgn_core::transport::GwOptions;

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    SimulateData,
    MakeShapes,
    Train,
    Sample,
    Eval,
    Theory,
    AttentionStudy,
    GwStudy,
    AblateDepth,
}

/// Runs `cmd` and returns its summary line. The resolved configuration is
/// written to `out_dir/config.resolved` first.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<String> {
    let out = cfg.out_dir();
    let resolved = cfg.write_resolved(&out).with_context(|| format!("cannot write to {}", out.display()))?;
    log::info!("configuration written to {}", resolved.display());
    match cmd {
        Command::SimulateData => simulate_data(cfg),
        Command::MakeShapes => make_shapes(cfg),
        Command::Train => run_train(cfg),
        Command::Sample => run_sample(cfg),
        Command::Eval => run_eval(cfg),
        Command::Theory => run_theory(cfg),
        Command::AttentionStudy => run_attention(cfg),
        Command::GwStudy => run_gw(cfg),
        Command::AblateDepth => run_ablation(cfg),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load(dir: &Path) -> Result<Dataset> {
    if !dir.exists() {
        bail!("dataset directory {} does not exist", dir.display());
    }
    load_dataset(dir).with_context(|| format!("cannot load dataset {}", dir.display()))
}

/// Every `*.graph` file of `dir` in name order.
fn read_graph_dir(dir: &Path) -> Result<Vec<GeometricGraph>> {
    if !dir.is_dir() {
        bail!("graph directory {} does not exist", dir.display());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "graph"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("{} holds no .graph files", dir.display());
    }
    paths.iter().map(|p| read_graph(p).map_err(Into::into)).collect()
}

/// Position generation on shapes must not see the displacement features.
fn for_task(graphs: Vec<GeometricGraph>, ds_kind: Option<&str>, task: Task) -> Vec<GeometricGraph> {
    if task == Task::Positions && ds_kind == Some("shapes") {
        graphs
            .into_iter()
            .map(|mut g| {
                g.features = Array2::zeros((g.num_nodes(), 0));
                g
            })
            .collect()
    } else {
        graphs
    }
}

fn auto_path(cfg: &RunConfig, key: &str, fallback: PathBuf) -> PathBuf {
    if cfg.is_auto(key) {
        fallback
    } else {
        cfg.path(key)
    }
}

fn interpolant(cfg: &RunConfig) -> InterpolantSpec {
    InterpolantSpec::new(cfg.value("interpolant.kind")).with_sigma_min(cfg.value("interpolant.sigma_min")).with_diffusion(
        cfg.value("interpolant.steps"),
        cfg.value("interpolant.beta_min"),
        cfg.value("interpolant.beta_max"),
    )
}

fn schedule(cfg: &RunConfig) -> SchedulePolicy {
    let mut kind: ScheduleKind = cfg.value("schedule.kind");
    if !cfg.is_auto("schedule.param") {
        let p: f64 = cfg.value("schedule.param");
        kind = match kind {
            ScheduleKind::Exponential { .. } => ScheduleKind::Exponential { rate: p },
            ScheduleKind::Logarithm { .. } => ScheduleKind::Logarithm { rate: p },
            ScheduleKind::Relu { .. } => ScheduleKind::Relu { knee: p },
            k => k,
        };
    }
    let bounds = if cfg.is_auto("schedule.bounds") {
        None
    } else {
        let v: Vec<usize> = cfg.list("schedule.bounds");
        Some([v[0], v[1], v[2], v[3]])
    };
    SchedulePolicy { kind, budget_mode: cfg.value("schedule.budget_mode"), bounds }
}

pub fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.value("train.epochs"),
        batch: cfg.value("train.batch"),
        lr: cfg.value("train.lr"),
        warmup_epochs: cfg.value("train.warmup_epochs"),
        ema_decay: cfg.value("train.ema_decay"),
        hdim: cfg.value("model.hdim"),
        layers: cfg.value("model.layers"),
        mp_kind: cfg.value("model.mp_kind"),
        method: cfg.value("model.method"),
        task: cfg.value("model.task"),
        interpolant: interpolant(cfg),
        schedule: schedule(cfg),
        baseline_k: (!cfg.is_auto("model.baseline_k")).then(|| cfg.value("model.baseline_k")),
        seed: cfg.value("seed"),
    }
}

fn loss_csv(rows: &[LossRow]) -> String {
    let mut s = String::from("epoch,step,loss,lr\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.step, r.loss, r.lr);
    }
    s
}

fn simulate_data(cfg: &RunConfig) -> Result<String> {
    let params = RdParams {
        k2: cfg.value("rd.k2"),
        k3: cfg.value("rd.k3"),
        k4: cfg.value("rd.k4"),
        k5: cfg.value("rd.k5"),
        k7: cfg.value("rd.k7"),
        k9: cfg.value("rd.k9"),
        d_b: cfg.value("rd.d_b"),
        d_w: cfg.value("rd.d_w"),
        alpha_range: cfg.value("rd.alpha_range"),
        init_range: cfg.value("rd.init_range"),
        l: cfg.value("rd.l"),
        dx: cfg.value("rd.dx"),
        dt: cfg.value("rd.dt"),
        t_end: cfg.value("rd.t_end"),
        convention: cfg.value("rd.convention"),
    };
    let rd = RdDatasetConfig {
        params,
        n_train: cfg.value("rd.n_train"),
        n_test: cfg.value("rd.n_test"),
        train_grid: cfg.grid("rd.train_grid"),
        test_grid: cfg.grid("rd.test_grid"),
        seed: cfg.value("seed"),
    };
    let ds = make_rd_dataset(&rd)?;
    let dir = cfg.path("data.dir");
    save_dataset(&dir, &ds)?;
    Ok(format!(
        "simulated {} train and {} test graphs ({} convention) into {}",
        ds.train.len(),
        ds.test.len(),
        rd.params.convention,
        dir.display()
    ))
}

fn make_shapes(cfg: &RunConfig) -> Result<String> {
    let ds = make_shape_dataset(
        cfg.value("shapes.n_train"),
        cfg.value("shapes.n_test"),
        cfg.value("shapes.n_points"),
        cfg.value("seed"),
    )?;
    let dir = cfg.path("data.dir");
    save_dataset(&dir, &ds)?;
    Ok(format!("wrote {} train and {} test shapes into {}", ds.train.len(), ds.test.len(), dir.display()))
}

fn run_train(cfg: &RunConfig) -> Result<String> {
    let tc = train_config(cfg);
    let ds = load(&cfg.path("data.dir"))?;
    let data = for_task(ds.train.clone(), ds.kind(), tc.task);
    let out = train(&tc, &data)?;
    let dir = cfg.out_dir();
    write(&dir.join("loss.csv"), &loss_csv(&out.losses))?;
    for (name, g) in [("model", &out.model), ("ema", &out.ema)] {
        if let Some(ck) = g.to_checkpoint() {
            checkpoint::save(&dir.join(format!("{name}.ckpt")), &ck)?;
        }
    }
    let last = out.losses.last().map_or("none".to_string(), |r| format!("{:.6}", r.loss));
    Ok(format!(
        "trained {} for {} epochs on {} graphs, final loss {last}",
        label(tc.method, Some(tc.mp_kind)),
        tc.epochs,
        data.len()
    ))
}

fn label(method: Method, mp: Option<MpKind>) -> String {
    match (method, mp) {
        (Method::Baseline(BaselineKind::RandomPred), _) | (_, None) => method.to_string(),
        (m, Some(k)) => format!("{m}/{k}"),
    }
}

fn generator(cfg: &RunConfig) -> Result<Generator> {
    let tc = train_config(cfg);
    if tc.method.is_random() {
        return Ok(Generator { task: tc.task, interpolant: tc.interpolant.clone(), structure: tc.structure(), model: None });
    }
    let weights = cfg.get("sample.weights");
    let path = auto_path(cfg, "sample.checkpoint", cfg.out_dir().join(format!("{weights}.ckpt")));
    if !path.exists() {
        bail!("checkpoint {} does not exist (run `train` first)", path.display());
    }
    let ck = checkpoint::load(&path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    Ok(Generator::from_checkpoint(&ck)?)
}

/// Normalized value of zero expression for `gene`, from the dataset manifest.
fn knockout_level(cfg: &RunConfig, ds: &Dataset, task: CondTask) -> Result<f64> {
    if !cfg.is_auto("sample.knockout_level") {
        return Ok(cfg.value("sample.knockout_level"));
    }
    let CondTask::GeneKnockout { gene } = task else {
        return Ok(0.0);
    };
    let Some(norm) = ds.normalization() else {
        bail!("the dataset manifest has no normalization; set sample.knockout_level");
    };
    if gene >= norm.min.len() {
        bail!("gene index {gene} out of range for {} genes", norm.min.len());
    }
    let zero = Array2::zeros((1, norm.min.len()));
    Ok(norm.normalize(&zero)[[0, gene]])
}

fn sample_graphs(cfg: &RunConfig, gen: &Generator, ds: &Dataset, task: CondTask, seed: u64) -> Result<Vec<GeometricGraph>> {
    let split = if cfg.get("sample.split") == "train" { &ds.train } else { &ds.test };
    let n: usize = cfg.value("sample.n");
    let take = if n == 0 { split.len() } else { n.min(split.len()) };
    let templates = for_task(split[..take].to_vec(), ds.kind(), gen.task);
    let level = knockout_level(cfg, ds, task)?;
    let masks: Option<Vec<ConditionMask>> = match task {
        CondTask::Unconditional => None,
        t => Some(templates.iter().map(|g| t.mask(g, level).map(|m| m.expect("conditional task"))).collect::<Result<_, _>>()?),
    };
    Ok(sample(gen, &templates, masks.as_deref(), cfg.value("sample.nfes"), cfg.value("sample.batch"), seed)?)
}

fn run_sample(cfg: &RunConfig) -> Result<String> {
    let gen = generator(cfg)?;
    let ds = load(&cfg.path("data.dir"))?;
    let task: CondTask = cfg.value("sample.task");
    let graphs = sample_graphs(cfg, &gen, &ds, task, cfg.value("seed"))?;
    let dir = auto_path(cfg, "sample.dir", cfg.out_dir().join("samples"));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for entry in fs::read_dir(&dir)?.filter_map(|e| e.ok()) {
        let p = entry.path();
        if p.extension().is_some_and(|x| x == "graph") {
            fs::remove_file(&p).with_context(|| format!("cannot remove stale {}", p.display()))?;
        }
    }
    for (i, g) in graphs.iter().enumerate() {
        write_graph(&dir.join(format!("{i:06}.graph")), g)?;
    }
    Ok(format!("sampled {} graphs ({task}, {}) into {}", graphs.len(), label(gen.method(), gen.mp_kind()), dir.display()))
}

fn metrics_row(cfg: &RunConfig, mean: f64, std: f64) -> String {
    let method: Method = cfg.value("model.method");
    let mp = if method.is_random() { "none".to_string() } else { cfg.get("model.mp_kind").to_string() };
    format!("{},{method},{mp},{mean},{std},{}\n", cfg.get("sample.task"), cfg.get("seed"))
}

const METRICS_HEADER: &str = "task,method,mp_kind,w2_mean,w2_std,seed\n";

fn run_eval(cfg: &RunConfig) -> Result<String> {
    let generated = read_graph_dir(&auto_path(cfg, "eval.generated", cfg.out_dir().join("samples")))?;
    let reference = read_graph_dir(&auto_path(cfg, "eval.reference", cfg.path("data.dir").join("test")))?;
    let task: Task = cfg.value("model.task");
    let r = evaluate_w2_with(
        &generated,
        &reference,
        task,
        cfg.value("eval.subsample"),
        cfg.value("eval.replicates"),
        cfg.value("seed"),
    )?;
    write(&cfg.out_dir().join("metrics.csv"), &format!("{METRICS_HEADER}{}", metrics_row(cfg, r.mean, r.std)))?;
    let note = if r.used_all { " (all points used)" } else { "" };
    Ok(format!("w2 {:.6} ± {:.6} over {} replicates of {} points{note}", r.mean, r.std, r.replicates.len(), r.subsample))
}

fn run_theory(cfg: &RunConfig) -> Result<String> {
    let snrs = log_grid(cfg.value("theory.snr_min"), cfg.value("theory.snr_max"), cfg.value("theory.points"));
    let rows = radius_table(&snrs)?;
    let mut s = String::from("snr,r_star,mi\n");
    for r in &rows {
        let _ = writeln!(s, "{},{},{}", r.snr, r.r_star, r.mi);
    }
    write(&cfg.out_dir().join("theory.csv"), &s)?;
    let (a, b) = (rows.first().expect("at least one snr"), rows.last().expect("at least one snr"));
    Ok(format!("optimal radius {:.4} at snr {} down to {:.4} at snr {}", a.r_star, a.snr, b.r_star, b.snr))
}

fn run_attention(cfg: &RunConfig) -> Result<String> {
    let ds = load(&cfg.path("data.dir"))?;
    let epochs: usize = cfg.value("attention.epochs");
    let tc = TrainConfig {
        epochs,
        batch: cfg.value("attention.batch"),
        lr: cfg.value("attention.lr"),
        warmup_epochs: cfg.value::<usize>("train.warmup_epochs").min(epochs),
        hdim: cfg.value("attention.hdim"),
        layers: 1,
        mp_kind: MpKind::Gat,
        method: Method::Baseline(BaselineKind::FullyConnected),
        task: Task::Positions,
        ..train_config(cfg)
    };
    let data = for_task(ds.train.clone(), ds.kind(), Task::Positions);
    let out = train(&tc, &data)?;
    let n: usize = cfg.value("attention.n_graphs");
    let graphs = for_task(ds.test[..n.min(ds.test.len())].to_vec(), ds.kind(), Task::Positions);
    let buckets: Vec<f64> = cfg.list("attention.buckets");
    let study = attention_study(&out.ema, &graphs, &buckets, cfg.value("attention.bins"), tc.batch, cfg.value("seed"))?;
    let dir = cfg.out_dir();
    let mut s = String::from("t_bucket,bin_lo,bin_hi,weight\n");
    for r in &study.rows {
        let _ = writeln!(s, "{},{},{},{}", r.t, r.bin_lo, r.bin_hi, r.weight);
    }
    write(&dir.join("attention.csv"), &s)?;
    let mut s = String::from("t_bucket,weighted_distance\n");
    for (t, d) in &study.weighted_distance {
        let _ = writeln!(s, "{t},{d}");
    }
    write(&dir.join("attention_distance.csv"), &s)?;
    write(&dir.join("attention_loss.csv"), &loss_csv(&out.losses))?;
    let parts: Vec<String> = study.weighted_distance.iter().map(|(t, d)| format!("{t}:{d:.4}")).collect();
    Ok(format!("attention-weighted distance by noise bucket {}", parts.join(" ")))
}

pub fn gw_config(cfg: &RunConfig) -> GwStudyConfig {
    GwStudyConfig {
        noise: cfg.list("gw.noise"),
        clusters: cfg.list("gw.clusters"),
        pooling: cfg.value("gw.pooling"),
        target: cfg.value("gw.target"),
        seeds: cfg.value("gw.seeds"),
        sigma_max: cfg.value("gw.sigma_max"),
        gw: GwOptions { epsilon: cfg.value("gw.epsilon"), iters: cfg.value("gw.iters"), scale: cfg.value("gw.scale") },
        seed: cfg.value("seed"),
    }
}

fn run_gw(cfg: &RunConfig) -> Result<String> {
    let ds = load(&cfg.path("data.dir"))?;
    let n: usize = cfg.value("gw.n_graphs");
    if ds.train.len() < n {
        bail!("gw.n_graphs = {n} but the dataset has {} training graphs", ds.train.len());
    }
    let study = gw_study(&ds.train[..n], &gw_config(cfg))?;
    let dir = cfg.out_dir();
    let mut s = String::from("t,clusters,gw_mean\n");
    for (t, c, m) in &study.rows {
        let _ = writeln!(s, "{t},{c},{m}");
    }
    write(&dir.join("gw.csv"), &s)?;
    let mut s = String::from("t,argmin_clusters\n");
    for (t, c) in &study.argmin {
        let _ = writeln!(s, "{t},{c}");
    }
    write(&dir.join("gw_argmin.csv"), &s)?;
    let parts: Vec<String> = study.argmin.iter().map(|(t, c)| format!("{t}:{c}")).collect();
    Ok(format!("gw argmin clusters by noise level {}", parts.join(" ")))
}

fn run_ablation(cfg: &RunConfig) -> Result<String> {
    let ds = load(&cfg.path("data.dir"))?;
    let base = train_config(cfg);
    let seed: u64 = cfg.value("seed");
    let mut s = String::from("layers,w2_mean,w2_std,final_loss\n");
    let mut parts = Vec::new();
    for k in cfg.list::<usize>("ablate.depths") {
        let tc = TrainConfig { layers: k, ..base.clone() };
        let out = train(&tc, &for_task(ds.train.clone(), ds.kind(), tc.task))?;
        let gen = if cfg.get("sample.weights") == "ema" { &out.ema } else { &out.model };
        let generated = sample_graphs(cfg, gen, &ds, CondTask::Unconditional, seed)?;
        let reference = for_task(ds.test.clone(), ds.kind(), tc.task);
        let r =
            evaluate_w2_with(&generated, &reference, tc.task, cfg.value("eval.subsample"), cfg.value("eval.replicates"), seed)?;
        let last = out.losses.last().map_or(f64::NAN, |r| r.loss);
        let _ = writeln!(s, "{k},{},{},{last}", r.mean, r.std);
        parts.push(format!("{k}:{:.4}", r.mean));
        log::info!("depth {k}: w2 {:.6}", r.mean);
    }
    write(&cfg.out_dir().join("ablation.csv"), &s)?;
    Ok(format!("w2 by depth {}", parts.join(" ")))
}
