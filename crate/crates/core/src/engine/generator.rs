//! A trained network together with everything needed to rebuild its inputs.

use ndarray::{s, Array2};

use crate::autodiff::checkpoint::Checkpoint;
use crate::dmp::{prepare, DmpModel, Method, MpKind, StructureConfig, Task};
use crate::error::{Error, Result};
use crate::graph::GeometricGraph;
use crate::interpolant::{InterpolantKind, InterpolantSpec};
use crate::schedule::{ScheduleKind, SchedulePolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub task: Task,
    pub interpolant: InterpolantSpec,
    pub structure: StructureConfig,
    /// `None` for the random baseline.
    pub model: Option<DmpModel>,
}

fn schedule_param(kind: &ScheduleKind) -> Option<f64> {
    match *kind {
        ScheduleKind::Linear => None,
        ScheduleKind::Exponential { rate } | ScheduleKind::Logarithm { rate } => Some(rate),
        ScheduleKind::Relu { knee } => Some(knee),
    }
}

pub(crate) fn schedule_kind(name: &str, param: Option<f64>) -> Result<ScheduleKind> {
    Ok(match (ScheduleKind::named(name)?, param) {
        (ScheduleKind::Exponential { .. }, Some(rate)) => ScheduleKind::Exponential { rate },
        (ScheduleKind::Logarithm { .. }, Some(rate)) => ScheduleKind::Logarithm { rate },
        (ScheduleKind::Relu { .. }, Some(knee)) => ScheduleKind::Relu { knee },
        (k, _) => k,
    })
}

impl Generator {
    pub fn method(&self) -> Method {
        self.structure.method
    }

    pub fn mp_kind(&self) -> Option<MpKind> {
        self.model.as_ref().map(|m| m.config.mp_kind)
    }

    /// Network output for graphs whose generated component is stacked in `z`,
    /// all at noise level `t`.
    pub fn field(&self, templates: &[GeometricGraph], z: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
        let model =
            self.model.as_ref().ok_or_else(|| Error::InvalidArgument("the random baseline has no vector field".into()))?;
        let graphs = with_component(templates, z, self.task)?;
        let pairs: Vec<(&GeometricGraph, f64)> = graphs.iter().map(|g| (g, t)).collect();
        let b = prepare(&pairs, &self.structure)?;
        model.predict(&b)
    }

    pub fn to_checkpoint(&self) -> Option<Checkpoint> {
        let mut ck = self.model.as_ref()?.to_checkpoint();
        let i = &self.interpolant;
        let st = &self.structure;
        let mut put = |k: &str, v: String| ck.meta.push((k.to_string(), v));
        put("method", st.method.name().into());
        put("task", self.task.to_string());
        put("interpolant", i.kind.name().into());
        put("sigma_min", i.sigma_min.to_string());
        put("diffusion_steps", i.steps.to_string());
        put("beta_min", i.beta_min.to_string());
        put("beta_max", i.beta_max.to_string());
        put("sigma_max", i.sigma_max.to_string());
        put("schedule", st.schedule.kind.name().into());
        if let Some(p) = schedule_param(&st.schedule.kind) {
            put("schedule_param", p.to_string());
        }
        put("budget_mode", st.schedule.budget_mode.to_string());
        if let Some(b) = st.schedule.bounds {
            put("bounds", b.map(|v| v.to_string()).join(","));
        }
        if let Some(k) = st.baseline_k {
            put("baseline_k", k.to_string());
        }
        put("structure_seed", st.seed.to_string());
        Some(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| ck.meta(k).ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks `{k}`")));
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::InvalidArgument(format!("checkpoint `{k}` has invalid value `{v}`")))
        }
        let kind: InterpolantKind = get("interpolant")?.parse()?;
        let interpolant = InterpolantSpec::new(kind)
            .with_sigma_max(parse("sigma_max", get("sigma_max")?)?)
            .with_sigma_min(parse("sigma_min", get("sigma_min")?)?)
            .with_diffusion(
                parse("diffusion_steps", get("diffusion_steps")?)?,
                parse("beta_min", get("beta_min")?)?,
                parse("beta_max", get("beta_max")?)?,
            );
        let param = ck.meta("schedule_param").map(|v| parse("schedule_param", v)).transpose()?;
        let bounds = match ck.meta("bounds") {
            Some(v) => {
                let parts: Vec<usize> = v.split(',').map(|x| parse("bounds", x)).collect::<Result<_>>()?;
                Some(
                    <[usize; 4]>::try_from(parts)
                        .map_err(|_| Error::InvalidArgument("checkpoint `bounds` needs 4 values".into()))?,
                )
            }
            None => None,
        };
        let structure = StructureConfig {
            method: get("method")?.parse()?,
            schedule: SchedulePolicy {
                kind: schedule_kind(get("schedule")?, param)?,
                budget_mode: parse("budget_mode", get("budget_mode")?)?,
                bounds,
            },
            baseline_k: ck.meta("baseline_k").map(|v| parse("baseline_k", v)).transpose()?,
            seed: parse("structure_seed", get("structure_seed")?)?,
        };
        Ok(Self { task: get("task")?.parse()?, interpolant, structure, model: Some(DmpModel::from_checkpoint(ck)?) })
    }
}

/// Copies of `templates` whose generated component is replaced by consecutive row blocks of `z`.
pub fn with_component(templates: &[GeometricGraph], z: &Array2<f64>, task: Task) -> Result<Vec<GeometricGraph>> {
    let total: usize = templates.iter().map(|g| g.num_nodes()).sum();
    if z.nrows() != total {
        return Err(Error::shape("with_component", format!("{} rows for {total} nodes", z.nrows())));
    }
    let mut off = 0;
    templates
        .iter()
        .map(|g| {
            let n = g.num_nodes();
            let block = z.slice(s![off..off + n, ..]).to_owned();
            off += n;
            let mut out = g.clone();
            if block.ncols() != task.component(g).ncols() {
                return Err(Error::shape(
                    "with_component",
                    format!("{} columns for a {}-wide {task} block", block.ncols(), task.component(g).ncols()),
                ));
            }
            *task.component_mut(&mut out) = block;
            out.edges.clear();
            Ok(out)
        })
        .collect()
}
