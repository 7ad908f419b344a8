//! Noise-level schedules for the message-passing range `r_t` and resolution `s_t`.
//!
//! `t = 0` is pure noise and `t = 1` is data. Resolution grows with `t` and the
//! neighbor count shrinks, so the work per step stays near `r1 * N`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Linear,
    /// `(e^{rate t} - 1) / (e^rate - 1)`
    Exponential {
        rate: f64,
    },
    /// `ln(1 + rate t) / ln(1 + rate)`
    Logarithm {
        rate: f64,
    },
    /// `max(0, t - knee) / (1 - knee)`
    Relu {
        knee: f64,
    },
}

pub const DEFAULT_EXP_RATE: f64 = 4.0;
pub const DEFAULT_LOG_RATE: f64 = 20.0;
pub const DEFAULT_RELU_KNEE: f64 = 0.5;

impl ScheduleKind {
    pub const NAMES: [&'static str; 4] = ["linear", "exponential", "logarithm", "relu"];

    /// Kind by name with default constants.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Self::Linear),
            "exponential" => Ok(Self::Exponential { rate: DEFAULT_EXP_RATE }),
            "logarithm" => Ok(Self::Logarithm { rate: DEFAULT_LOG_RATE }),
            "relu" => Ok(Self::Relu { knee: DEFAULT_RELU_KNEE }),
            other => Err(Error::InvalidArgument(format!(
                "unknown schedule kind `{other}` (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Exponential { .. } => "exponential",
            Self::Logarithm { .. } => "logarithm",
            Self::Relu { .. } => "relu",
        }
    }

    /// Progress `g(t)` with `g(0) = 0` and `g(1) = 1`.
    pub fn progress(&self, t: f64) -> f64 {
        match *self {
            Self::Linear => t,
            Self::Exponential { rate } => (rate * t).exp_m1() / rate.exp_m1(),
            Self::Logarithm { rate } => (rate * t).ln_1p() / rate.ln_1p(),
            Self::Relu { knee } => (t - knee).max(0.0) / (1.0 - knee),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::named(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub r0: usize,
    pub r1: usize,
    pub s0: usize,
    pub s1: usize,
    /// Derive `r_t` from `r_t * s_t = r1 * N` instead of interpolating it.
    pub budget_mode: bool,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r1 < 1 || self.r0 < self.r1 {
            return Err(Error::InvalidArgument(format!("need r0 >= r1 >= 1, got r0={} r1={}", self.r0, self.r1)));
        }
        if self.s0 < 1 || self.s1 < self.s0 {
            return Err(Error::InvalidArgument(format!("need s1 >= s0 >= 1, got s0={} s1={}", self.s0, self.s1)));
        }
        match self.kind {
            ScheduleKind::Exponential { rate } | ScheduleKind::Logarithm { rate } if !(rate > 0.0) => {
                Err(Error::InvalidArgument(format!("schedule rate must be positive, got {rate}")))
            }
            ScheduleKind::Relu { knee } if !(0.0..1.0).contains(&knee) => {
                Err(Error::InvalidArgument(format!("relu knee must lie in [0, 1), got {knee}")))
            }
            _ => Ok(()),
        }
    }

    pub fn with_kind(mut self, kind: ScheduleKind) -> Self {
        self.kind = kind;
        self
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// `r1 = ceil(N^{1/3})`, `s1 = N`, `s0 = ceil(sqrt(r1 N))`, `r0 = s0`, budget mode on.
pub fn default_bounds(n: usize) -> ScheduleSpec {
    let n = n.max(1);
    let r1 = ceil_root(n, 3);
    let s0 = ceil_root(r1 * n, 2).min(n);
    ScheduleSpec { kind: ScheduleKind::Linear, r0: s0, r1, s0, s1: n, budget_mode: true }
}

/// Smallest `p` with `p^d >= n`.
fn ceil_root(n: usize, d: u32) -> usize {
    let mut p = (n as f64).powf(1.0 / d as f64).round() as usize;
    while p > 1 && (p - 1).pow(d) >= n {
        p -= 1;
    }
    while p.pow(d) < n {
        p += 1;
    }
    p.max(1)
}

/// `(r_t, s_t)` for a graph with `n` nodes.
///
/// In budget mode the range for `0 < t < 1` is `round(r1 N / s_t)`, otherwise it
/// is interpolated from `r0` to `r1`. Either way it is limited to
/// `[r1, min(r0, s0 - 1)]`; the limits only depend on the boundary values, so
/// the range never grows with `t`. The boundaries return `(r0, s0)` and
/// `(r1, s1)` as given.
pub fn eval_schedule(spec: &ScheduleSpec, t: f64, n: usize) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    if t == 0.0 {
        return Ok((spec.r0, spec.s0));
    }
    if t == 1.0 {
        return Ok((spec.r1, spec.s1));
    }
    let g = spec.kind.progress(t);
    let s = round_half_up(spec.s0 as f64 + (spec.s1 - spec.s0) as f64 * g).clamp(spec.s0, spec.s1);
    let r = if spec.budget_mode {
        round_half_up((spec.r1 * n) as f64 / s as f64)
    } else {
        round_half_up(spec.r0 as f64 - (spec.r0 - spec.r1) as f64 * g)
    };
    let r = r.min(spec.r0).min(spec.s0.saturating_sub(1)).max(spec.r1);
    Ok((r, s))
}

/// Schedule kind plus either fixed boundary values or per-graph defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePolicy {
    pub kind: ScheduleKind,
    pub budget_mode: bool,
    /// `[r0, r1, s0, s1]`; `None` derives them from the node count.
    pub bounds: Option<[usize; 4]>,
}

impl Default for SchedulePolicy {
    fn default() -> Self {
        Self { kind: ScheduleKind::Linear, budget_mode: true, bounds: None }
    }
}

impl SchedulePolicy {
    pub fn spec_for(&self, n: usize) -> ScheduleSpec {
        match self.bounds {
            Some([r0, r1, s0, s1]) => ScheduleSpec { kind: self.kind, r0, r1, s0, s1, budget_mode: self.budget_mode },
            None => ScheduleSpec { kind: self.kind, budget_mode: self.budget_mode, ..default_bounds(n) },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds() -> Vec<ScheduleKind> {
        ScheduleKind::NAMES.iter().map(|n| ScheduleKind::named(n).unwrap()).collect()
    }

    #[test]
    fn default_bounds_examples() {
        let s = default_bounds(100);
        assert_eq!((s.r1, s.s1, s.s0, s.r0), (5, 100, 23, 23));
        let s = default_bounds(8);
        assert_eq!((s.r1, s.s1, s.s0, s.r0), (2, 8, 4, 4));
        assert!(s.budget_mode);
        for n in [2usize, 27, 64, 1000, 1001] {
            let s = default_bounds(n);
            let r1 = s.r1;
            assert!(r1.pow(3) >= n && (r1 - 1).pow(3) < n);
            assert!(s.s0 * s.s0 >= r1 * n || s.s0 == n);
        }
    }

    #[test]
    fn progress_endpoints_and_growth() {
        for k in all_kinds() {
            assert_eq!(k.progress(0.0), 0.0);
            assert_eq!(k.progress(1.0), 1.0);
            let mut prev = 0.0;
            for i in 1..=1000 {
                let g = k.progress(i as f64 / 1000.0);
                match k {
                    ScheduleKind::Relu { knee } if (i as f64 / 1000.0) <= knee => assert_eq!(g, 0.0),
                    _ => assert!(g > prev, "{k} not increasing at {i}"),
                }
                prev = g;
            }
        }
    }

    #[test]
    fn boundaries_are_exact() {
        for k in all_kinds() {
            for budget_mode in [true, false] {
                let spec = ScheduleSpec { kind: k, r0: 23, r1: 5, s0: 23, s1: 100, budget_mode };
                assert_eq!(eval_schedule(&spec, 0.0, 100).unwrap(), (23, 23));
                assert_eq!(eval_schedule(&spec, 1.0, 100).unwrap(), (5, 100));
            }
        }
    }

    #[test]
    fn time_outside_unit_interval_rejected() {
        let spec = default_bounds(10);
        assert!(matches!(eval_schedule(&spec, 1.5, 10), Err(Error::TimeOutOfRange(_))));
        assert!(eval_schedule(&spec, -1e-9, 10).is_err());
    }

    #[test]
    fn budget_sweep_example() {
        let spec = ScheduleSpec { kind: ScheduleKind::Linear, r0: 20, r1: 4, s0: 20, s1: 100, budget_mode: true };
        for i in 0..=100 {
            let (r, s) = eval_schedule(&spec, i as f64 / 100.0, 100).unwrap();
            assert!((r * s) as f64 <= 1.25 * 400.0, "t={} r={r} s={s}", i as f64 / 100.0);
        }
    }

    #[test]
    fn monotone_and_within_budget_on_fine_grid() {
        for n in [2usize, 8, 50, 100, 400, 1000] {
            for k in all_kinds() {
                for budget_mode in [true, false] {
                    let spec = ScheduleSpec { budget_mode, ..default_bounds(n) }.with_kind(k);
                    let mut prev = eval_schedule(&spec, 0.0, n).unwrap();
                    for i in 1..=1000 {
                        let cur = eval_schedule(&spec, i as f64 / 1000.0, n).unwrap();
                        assert!(cur.0 <= prev.0 && cur.1 >= prev.1, "{k} n={n} {prev:?} -> {cur:?}");
                        if spec.r1 < spec.s0 && i < 1000 {
                            assert!(cur.0 < cur.1, "{k} n={n} r={} s={}", cur.0, cur.1);
                        }
                        if budget_mode {
                            assert!((cur.0 * cur.1) as f64 <= 1.25 * (spec.r1 * n) as f64);
                        }
                        prev = cur;
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_bounds_rejected() {
        let bad = ScheduleSpec { kind: ScheduleKind::Linear, r0: 1, r1: 2, s0: 1, s1: 4, budget_mode: true };
        assert!(bad.validate().is_err());
        assert!(default_bounds(100).with_kind(ScheduleKind::Relu { knee: 1.0 }).validate().is_err());
        assert!(ScheduleKind::named("cosine").is_err());
    }
}
