//! Parameters and forward pass of the DMP network.

use ndarray::Array2;

use super::layers::{gat_conv, gcn_conv};
use super::structure::BatchStructure;
use super::MpKind;
use crate::autodiff::checkpoint::Checkpoint;
use crate::autodiff::{BnState, Linear, Mlp, Mode, ParamId, ParamStore, Session, Var};
use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmpConfig {
    /// Width of `[features | positions | t]`.
    pub in_dim: usize,
    pub pos_dim: usize,
    pub hdim: usize,
    pub odim: usize,
    pub layers: usize,
    pub mp_kind: MpKind,
}

impl DmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hdim == 0 || self.odim == 0 || self.in_dim == 0 || self.pos_dim == 0 {
            return Err(Error::InvalidArgument(format!("invalid network shape {self:?}")));
        }
        Ok(())
    }
}

/// Per-node messages built from a pair of vectors, a relative position and a distance.
#[derive(Debug, Clone, PartialEq)]
struct PairMessage {
    pair: Linear,
    rel: Linear,
    dist: Linear,
    mlp: Mlp,
}

impl PairMessage {
    fn new(store: &mut ParamStore, bn: &mut Vec<BnState>, name: &str, c: &DmpConfig, rng: &mut crate::rng::Rand) -> Self {
        let h = c.hdim;
        Self {
            pair: Linear::new(store, &format!("{name}.pair"), 2 * h, h, rng),
            rel: Linear::new(store, &format!("{name}.rel"), c.pos_dim, h, rng),
            dist: Linear::new(store, &format!("{name}.dist"), 1, h, rng),
            mlp: Mlp::new(store, bn, &format!("{name}.mlp"), &[3 * h, h, h], rng),
        }
    }

    fn apply(&self, s: &mut Session, first: Var, second: Var, rel: Var, dist: Var) -> Result<Var> {
        let pair = s.tape.concat_cols(&[first, second])?;
        let a = s.linear(&self.pair, pair)?;
        let b = s.linear(&self.rel, rel)?;
        let c = s.linear(&self.dist, dist)?;
        let cat = s.tape.concat_cols(&[a, b, c])?;
        s.mlp(&self.mlp, cat)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum MessagePassing {
    Gcn(Linear),
    Gat { lin_s: Linear, lin_t: Linear, att_s: ParamId, att_t: ParamId },
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    coarsen: PairMessage,
    mp: MessagePassing,
    spread: PairMessage,
    gate: Linear,
    combine: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmpModel {
    pub config: DmpConfig,
    pub params: ParamStore,
    pub bn: Vec<BnState>,
    lift: Mlp,
    coarse_lift: Mlp,
    blocks: Vec<Block>,
    project: Mlp,
}

/// Values recorded during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// Per layer: coarse edges including self-loops and their attention weights.
    pub attention: Vec<(Vec<Edge>, Array2<f64>)>,
}

impl DmpModel {
    pub fn new(config: DmpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let mut bn = Vec::new();
        let h = config.hdim;
        let lift = Mlp::new(&mut store, &mut bn, "lift", &[config.in_dim, h, h, h], &mut rng);
        let coarse_lift = Mlp::new(&mut store, &mut bn, "coarse_lift", &[config.in_dim, h, h, h], &mut rng);
        let mut blocks = Vec::with_capacity(config.layers);
        for k in 0..config.layers {
            let name = format!("layer{k}");
            let coarsen = PairMessage::new(&mut store, &mut bn, &format!("{name}.coarsen"), &config, &mut rng);
            let mp = match config.mp_kind {
                MpKind::Gcn => MessagePassing::Gcn(Linear::new(&mut store, &format!("{name}.gcn"), h, h, &mut rng)),
                MpKind::Gat => {
                    let lin_s = Linear::new(&mut store, &format!("{name}.gat.lin_s"), h, h, &mut rng);
                    let lin_t = Linear::new(&mut store, &format!("{name}.gat.lin_t"), h, h, &mut rng);
                    let bound = 1.0 / (h as f64).sqrt();
                    let mut att = || Array2::from_shape_fn((h, 1), |_| rand::Rng::gen_range(&mut rng, -bound..=bound));
                    let (a, b) = (att(), att());
                    let att_s = store.add(format!("{name}.gat.att_s"), a);
                    let att_t = store.add(format!("{name}.gat.att_t"), b);
                    MessagePassing::Gat { lin_s, lin_t, att_s, att_t }
                }
            };
            let spread = PairMessage::new(&mut store, &mut bn, &format!("{name}.spread"), &config, &mut rng);
            let gate = Linear::new(&mut store, &format!("{name}.gate"), 2 * h, h, &mut rng);
            let combine = Mlp::new(&mut store, &mut bn, &format!("{name}.combine"), &[h, h, h], &mut rng);
            blocks.push(Block { coarsen, mp, spread, gate, combine });
        }
        let project = Mlp::new(&mut store, &mut bn, "project", &[h, h, h, config.odim], &mut rng);
        Ok(Self { config, params: store, bn, lift, coarse_lift, blocks, project })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Output rows for every original node of the batch.
    pub fn forward(&self, s: &mut Session, b: &BatchStructure) -> Result<Var> {
        self.forward_traced(s, b, false).map(|(v, _)| v)
    }

    pub fn forward_traced(&self, s: &mut Session, b: &BatchStructure, trace: bool) -> Result<(Var, Trace)> {
        if b.h_in.ncols() != self.config.in_dim {
            return Err(Error::shape(
                "dmp_forward",
                format!("input width {} for a {}-wide network", b.h_in.ncols(), self.config.in_dim),
            ));
        }
        if b.rel.ncols() != self.config.pos_dim {
            return Err(Error::shape(
                "dmp_forward",
                format!("{}-d positions for a {}-d network", b.rel.ncols(), self.config.pos_dim),
            ));
        }
        let mut out_trace = Trace::default();
        let n_coarse = b.n_coarse;
        let h_in = s.constant(b.h_in.clone());
        let c_in = s.constant(b.coarse_in.clone());
        let rel = s.constant(b.rel.clone());
        let neg_rel = s.constant(-&b.rel);
        let dist = s.constant(b.dist.clone());
        let inv_count = s.constant(b.inv_count.clone());

        let mut h = s.mlp(&self.lift, h_in)?;
        let mut coarse = s.mlp(&self.coarse_lift, c_in)?;
        for (k, block) in self.blocks.iter().enumerate() {
            if k > 0 {
                let summed = s.tape.scatter_add(h, &b.cluster_of, n_coarse)?;
                coarse = s.tape.mul_col(summed, inv_count)?;
            }
            let own = s.tape.gather(coarse, &b.cluster_of)?;
            let msgs = block.coarsen.apply(s, own, h, neg_rel, dist)?;
            let c = s.tape.scatter_add(msgs, &b.cluster_of, n_coarse)?;
            let c = match &block.mp {
                MessagePassing::Gcn(lin) => gcn_conv(s, lin, c, &b.edges)?,
                MessagePassing::Gat { lin_s, lin_t, att_s, att_t } => {
                    let (a_s, a_t) = (s.p(*att_s), s.p(*att_t));
                    let g = gat_conv(s, lin_s, lin_t, a_s, a_t, c, &b.edges)?;
                    if trace {
                        out_trace.attention.push((g.edges, s.value(g.alpha).clone()));
                    }
                    g.out
                }
            };
            let own = s.tape.gather(c, &b.cluster_of)?;
            let spread = block.spread.apply(s, h, own, rel, dist)?;
            let cat = s.tape.concat_cols(&[h, spread])?;
            let gate = s.linear(&block.gate, cat)?;
            let lambda = s.tape.sigmoid(gate);
            let diff = s.tape.sub(h, spread)?;
            let gated = s.tape.mul(lambda, diff)?;
            let mixed = s.tape.add(spread, gated)?;
            h = s.mlp(&block.combine, mixed)?;
        }
        let out = s.mlp(&self.project, h)?;
        Ok((out, out_trace))
    }

    /// Evaluation-mode output values.
    pub fn predict(&self, b: &BatchStructure) -> Result<Array2<f64>> {
        let mut s = Session::new(&self.params, &self.bn, Mode::Eval);
        let out = self.forward(&mut s, b)?;
        Ok(s.value(out).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let meta = vec![
            ("in_dim".to_string(), c.in_dim.to_string()),
            ("pos_dim".to_string(), c.pos_dim.to_string()),
            ("hdim".to_string(), c.hdim.to_string()),
            ("odim".to_string(), c.odim.to_string()),
            ("layers".to_string(), c.layers.to_string()),
            ("mp_kind".to_string(), c.mp_kind.to_string()),
        ];
        let mut arrays: Vec<(String, Array2<f64>)> =
            self.params.iter().map(|(_, name, t)| (name.to_string(), t.values().clone())).collect();
        for st in &self.bn {
            arrays.push((format!("{}.running_mean", st.name), st.mean.clone().insert_axis(ndarray::Axis(0))));
            arrays.push((format!("{}.running_var", st.name), st.var.clone().insert_axis(ndarray::Axis(0))));
        }
        Checkpoint { meta, arrays }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get =
            |k: &str| -> Result<&str> { ck.meta(k).ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks `{k}`"))) };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::InvalidArgument(format!("checkpoint `{k}` is not an integer")))
        };
        let config = DmpConfig {
            in_dim: num("in_dim")?,
            pos_dim: num("pos_dim")?,
            hdim: num("hdim")?,
            odim: num("odim")?,
            layers: num("layers")?,
            mp_kind: get("mp_kind")?.parse()?,
        };
        let mut model = Self::new(config, 0)?;
        let ids: Vec<(ParamId, String)> = model.params.iter().map(|(id, n, _)| (id, n.to_string())).collect();
        for (id, name) in ids {
            let a = ck.array(&name).ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks array `{name}`")))?;
            let t = model.params.get_mut(id);
            if t.values().dim() != a.dim() {
                return Err(Error::shape("checkpoint", format!("`{name}` is {:?}, expected {:?}", a.dim(), t.values().dim())));
            }
            *t.values_mut() = a.clone();
        }
        for st in &mut model.bn {
            let m = ck.array(&format!("{}.running_mean", st.name));
            let v = ck.array(&format!("{}.running_var", st.name));
            let (Some(m), Some(v)) = (m, v) else {
                return Err(Error::InvalidArgument(format!("checkpoint lacks running stats of `{}`", st.name)));
            };
            if m.len() != st.mean.len() || v.len() != st.var.len() {
                return Err(Error::shape("checkpoint", format!("running stats of `{}`", st.name)));
            }
            st.mean = m.row(0).to_owned();
            st.var = v.row(0).to_owned();
            st.initialized = true;
        }
        Ok(model)
    }
}
