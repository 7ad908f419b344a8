//! Flow-matching / diffusion training loop.

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::generator::Generator;
use super::optim::{ema_update, Adam};
use crate::autodiff::{apply_bn_updates, Mode, Session};
use crate::dmp::{prepare, DmpConfig, DmpModel, Method, MpKind, StructureConfig, Task};
use crate::error::{Error, Result};
use crate::graph::GeometricGraph;
use crate::interpolant::{interpolate, regression_target, InterpolantSpec};
use crate::rng::{normal_matrix, stream};
use crate::schedule::SchedulePolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub warmup_epochs: usize,
    pub ema_decay: f64,
    pub hdim: usize,
    pub layers: usize,
    pub mp_kind: MpKind,
    pub method: Method,
    pub task: Task,
    pub interpolant: InterpolantSpec,
    pub schedule: SchedulePolicy,
    pub baseline_k: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::transcriptomics()
    }
}

impl TrainConfig {
    pub fn transcriptomics() -> Self {
        Self {
            epochs: 300,
            batch: 128,
            lr: 1e-3,
            warmup_epochs: 10,
            ema_decay: 0.95,
            hdim: 32,
            layers: 3,
            mp_kind: MpKind::Gcn,
            method: Method::Dmp,
            task: Task::Features,
            interpolant: InterpolantSpec::cfm(),
            schedule: SchedulePolicy::default(),
            baseline_k: None,
            seed: 0,
        }
    }

    pub fn shapes() -> Self {
        Self { lr: 1e-4, hdim: 64, task: Task::Positions, ..Self::transcriptomics() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs == 0 || self.batch == 0 || self.hdim == 0 || self.layers == 0 {
            return bad("epochs, batch, hdim and layers must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.warmup_epochs > self.epochs {
            return bad(format!("warmup of {} epochs exceeds {} epochs", self.warmup_epochs, self.epochs));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad(format!("ema decay must lie in [0, 1), got {}", self.ema_decay));
        }
        if self.interpolant.kind == crate::interpolant::InterpolantKind::Ve {
            return bad("the ve interpolant cannot be trained for sampling".into());
        }
        self.interpolant.validate()
    }

    pub fn structure(&self) -> StructureConfig {
        StructureConfig { method: self.method, schedule: self.schedule, baseline_k: self.baseline_k, seed: self.seed }
    }

    pub fn network(&self, example: &GeometricGraph) -> DmpConfig {
        DmpConfig {
            in_dim: example.feature_dim() + example.dim() + 1,
            pos_dim: example.dim(),
            hdim: self.hdim,
            odim: self.task.out_dim(example),
            layers: self.layers,
            mp_kind: self.mp_kind,
        }
    }

    /// Learning rate after `step` optimizer steps: linear warmup, then constant.
    pub fn lr_at(&self, step: usize, steps_per_epoch: usize) -> f64 {
        let warm = self.warmup_epochs * steps_per_epoch;
        if warm == 0 {
            self.lr
        } else {
            self.lr * ((step + 1) as f64 / warm as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Generator,
    pub ema: Generator,
    pub losses: Vec<LossRow>,
}

/// One noised training example.
struct Example {
    graph: GeometricGraph,
    t: f64,
    target: Array2<f64>,
}

fn noised_example(g: &GeometricGraph, task: Task, spec: &InterpolantSpec, rng: &mut crate::rng::Rand) -> Result<Example> {
    let t: f64 = rng.gen();
    let z1 = task.component(g);
    let z0 = normal_matrix(rng, z1.nrows(), z1.ncols());
    let noised = interpolate(&z0, z1, t, spec, rng)?;
    let target = regression_target(&z0, z1, &noised, t, spec);
    let mut graph = g.clone();
    *task.component_mut(&mut graph) = noised.z_t;
    graph.edges.clear();
    Ok(Example { graph, t, target })
}

/// Mean squared regression loss over every generated coordinate of the batch.
pub fn train(cfg: &TrainConfig, data: &[GeometricGraph]) -> Result<TrainOutput> {
    cfg.validate()?;
    let first = data.first().ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let structure = cfg.structure();
    let wrap = |model: Option<DmpModel>| Generator {
        task: cfg.task,
        interpolant: cfg.interpolant.clone(),
        structure: structure.clone(),
        model,
    };
    if cfg.method.is_random() {
        return Ok(TrainOutput { model: wrap(None), ema: wrap(None), losses: Vec::new() });
    }
    let mut model = DmpModel::new(cfg.network(first), cfg.seed)?;
    let mut ema = model.params.clone();
    let mut adam = Adam::new(&model.params);
    let mut rng = stream(cfg.seed, 1);
    let steps_per_epoch = data.len().div_ceil(cfg.batch);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let examples = chunk
                .iter()
                .map(|&i| noised_example(&data[i], cfg.task, &cfg.interpolant, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let pairs: Vec<(&GeometricGraph, f64)> = examples.iter().map(|e| (&e.graph, e.t)).collect();
            let b = prepare(&pairs, &structure)?;
            let targets: Vec<_> = examples.iter().map(|e| e.target.view()).collect();
            let target = concatenate(Axis(0), &targets).map_err(|e| Error::shape("train", e.to_string()))?;

            let mut sess = Session::new(&model.params, &model.bn, Mode::Train);
            let out = model.forward(&mut sess, &b)?;
            let loss_var = sess.tape.mse(out, &target)?;
            let loss = sess.value(loss_var)[[0, 0]];
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(step));
            }
            let (grads, updates) = sess.backward(loss_var)?;
            let lr = cfg.lr_at(step, steps_per_epoch);
            adam.step(&mut model.params, &grads, lr);
            apply_bn_updates(&mut model.bn, &updates);
            ema_update(&mut ema, &model.params, cfg.ema_decay);
            losses.push(LossRow { epoch, step, loss, lr });
            epoch_loss += loss;
            step += 1;
        }
        log::info!("epoch {epoch}: mean loss {:.6}", epoch_loss / steps_per_epoch as f64);
    }
    let mut ema_model = model.clone();
    ema_model.params = ema;
    Ok(TrainOutput { model: wrap(Some(model)), ema: wrap(Some(ema_model)), losses })
}
