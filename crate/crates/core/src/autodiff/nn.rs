//! Parameterized building blocks shared by every network in the crate.

use ndarray::{Array1, Array2};
use rand::Rng;

use super::tape::{BatchStats, Tape, Var};
use super::tensor::{ParamId, ParamStore};
use crate::error::Result;

pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, parameters differentiable.
    Train,
    /// Running statistics, parameters constant.
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BnId(pub usize);

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState {
    pub name: String,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    pub initialized: bool,
}

impl BnState {
    pub fn new(name: impl Into<String>, width: usize) -> Self {
        Self { name: name.into(), mean: Array1::zeros(width), var: Array1::ones(width), initialized: false }
    }

    /// The first update copies the batch statistics; later ones blend with momentum 0.1.
    pub fn update(&mut self, stats: &BatchStats) {
        let n = stats.rows as f64;
        let unbiased = if stats.rows > 1 { &stats.var * (n / (n - 1.0)) } else { stats.var.clone() };
        if self.initialized {
            self.mean = &self.mean * (1.0 - BN_MOMENTUM) + &stats.mean * BN_MOMENTUM;
            self.var = &self.var * (1.0 - BN_MOMENTUM) + &unbiased * BN_MOMENTUM;
        } else {
            self.mean = stats.mean.clone();
            self.var = unbiased;
            self.initialized = true;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for weight and bias.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..=bound));
        let b = Array2::from_shape_fn((1, fan_out), |_| rng.gen_range(-bound..=bound));
        Self { weight: store.add(format!("{name}.weight"), w), bias: store.add(format!("{name}.bias"), b), fan_in, fan_out }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub state: BnId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, stats: &mut Vec<BnState>, name: &str, width: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Array2::ones((1, width)));
        let beta = store.add(format!("{name}.beta"), Array2::zeros((1, width)));
        stats.push(BnState::new(name, width));
        Self { gamma, beta, state: BnId(stats.len() - 1) }
    }
}

/// Linear layers with batch norm and GELU between them; the last layer is plain.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub norms: Vec<BatchNorm>,
}

impl Mlp {
    pub fn new<R: Rng>(store: &mut ParamStore, stats: &mut Vec<BnState>, name: &str, dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let mut layers = Vec::new();
        let mut norms = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            layers.push(Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng));
            if i + 2 < dims.len() {
                norms.push(BatchNorm::new(store, stats, &format!("{name}.{i}.bn"), w[1]));
            }
        }
        Self { layers, norms }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }
}

/// Batch statistics recorded per batch norm during a training pass.
pub type BnUpdates = Vec<(BnId, BatchStats)>;

/// One forward pass: a tape with every model parameter bound to it.
pub struct Session<'m> {
    pub tape: Tape,
    params: Vec<Var>,
    mode: Mode,
    running: &'m [BnState],
    bn_updates: Vec<(BnId, BatchStats)>,
}

impl<'m> Session<'m> {
    pub fn new(store: &ParamStore, running: &'m [BnState], mode: Mode) -> Self {
        let mut tape = Tape::new();
        let params = store
            .iter()
            .map(|(_, _, t)| match mode {
                Mode::Train => tape.param(t.values().clone()),
                Mode::Eval => tape.constant(t.values().clone()),
            })
            .collect();
        Self { tape, params, mode, running, bn_updates: Vec::new() }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.params[id.0]
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn constant(&mut self, v: Array2<f64>) -> Var {
        self.tape.constant(v)
    }

    pub fn linear(&mut self, lin: &Linear, x: Var) -> Result<Var> {
        let h = self.tape.matmul(x, self.params[lin.weight.0])?;
        self.tape.add_bias(h, self.params[lin.bias.0])
    }

    pub fn batch_norm(&mut self, bn: &BatchNorm, x: Var) -> Result<Var> {
        let (g, b) = (self.params[bn.gamma.0], self.params[bn.beta.0]);
        match self.mode {
            Mode::Train => {
                let (y, stats) = self.tape.batch_norm_train(x, g, b)?;
                self.bn_updates.push((bn.state, stats));
                Ok(y)
            }
            Mode::Eval => {
                let st = &self.running[bn.state.0];
                self.tape.batch_norm_eval(x, g, b, &st.mean, &st.var)
            }
        }
    }

    pub fn mlp(&mut self, mlp: &Mlp, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, lin) in mlp.layers.iter().enumerate() {
            h = self.linear(lin, h)?;
            if let Some(bn) = mlp.norms.get(i) {
                h = self.batch_norm(bn, h)?;
                h = self.tape.gelu(h);
            }
        }
        Ok(h)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        self.tape.value(v)
    }

    /// Gradients for every bound parameter plus the batch statistics seen in this pass.
    pub fn backward(self, loss: Var) -> Result<(Vec<Array2<f64>>, BnUpdates)> {
        let Session { tape, params, bn_updates, .. } = self;
        let grads = tape.grad(loss, &params)?;
        Ok((grads, bn_updates))
    }

    pub fn into_bn_updates(self) -> Vec<(BnId, BatchStats)> {
        self.bn_updates
    }
}

pub fn apply_bn_updates(running: &mut [BnState], updates: &[(BnId, BatchStats)]) {
    for (id, stats) in updates {
        running[id.0].update(stats);
    }
}
