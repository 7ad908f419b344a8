//! Squared-loss Gromov-Wasserstein by KL mirror descent.
//!
//! Each outer step solves `T ← argmin ⟨∇, T⟩ + ε KL(T ‖ T_k)` over couplings,
//! which is a Sinkhorn projection of `T_k ⊙ exp(-∇/ε)`. Two starts are run
//! (product coupling and a distance-profile matching) and, for equal-size
//! uniform clouds, the coupling is also rounded to a permutation. The smallest
//! objective over the feasible couplings visited is returned.

use ndarray::{Array1, Array2, Axis};

use super::assignment::linear_assignment;
use super::PointCloud;
use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 512;
const MARGINAL_TOL: f64 = 1e-9;
const MAX_INNER: usize = 20_000;
/// Inner budget of one mirror step; the final coupling is projected to full tolerance.
const STEP_INNER: usize = 500;
const STATIONARY_TOL: f64 = 1e-10;

/// Rescaling of the two distance matrices before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GwScale {
    Raw,
    /// Each matrix divided by its own maximum; ignores overall size.
    Each,
    /// Both matrices divided by the larger of the two maxima; keeps relative size.
    Joint,
}

impl std::str::FromStr for GwScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "each" => Ok(Self::Each),
            "joint" => Ok(Self::Joint),
            other => Err(Error::InvalidArgument(format!("unknown gw scale `{other}` (expected raw, each or joint)"))),
        }
    }
}

impl std::fmt::Display for GwScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Raw => "raw",
            Self::Each => "each",
            Self::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwOptions {
    pub epsilon: f64,
    pub iters: usize,
    pub scale: GwScale,
}

impl Default for GwOptions {
    fn default() -> Self {
        Self { epsilon: 0.05, iters: 50, scale: GwScale::Each }
    }
}

#[derive(Debug, Clone)]
pub struct GwResult {
    pub value: f64,
    pub coupling: Array2<f64>,
    /// The returned coupling meets the marginal tolerance.
    pub converged: bool,
}

/// `Σ_ijkl (C1_ik − C2_jl)² T_ij T_kl` for a coupling with marginals `p`, `q`.
pub fn gw_objective(c1: &Array2<f64>, c2: &Array2<f64>, t: &Array2<f64>) -> f64 {
    let tens = local_cost(c1, c2, t);
    // Non-negative in exact arithmetic; clamp cancellation noise.
    (&tens * t).sum().max(0.0)
}

fn local_cost(c1: &Array2<f64>, c2: &Array2<f64>, t: &Array2<f64>) -> Array2<f64> {
    let p = t.sum_axis(Axis(1));
    let q = t.sum_axis(Axis(0));
    let a = c1.mapv(|x| x * x).dot(&p);
    let b = c2.mapv(|x| x * x).dot(&q);
    let cross = c1.dot(t).dot(&c2.t());
    Array2::from_shape_fn(t.dim(), |(i, j)| a[i] + b[j] - 2.0 * cross[[i, j]])
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Coupling of `p`, `q` proportional to `exp(log_k)` up to diagonal scaling.
/// Returns the coupling and whether the marginal tolerance was reached.
fn sinkhorn(log_k: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>, max_iter: usize) -> (Array2<f64>, bool) {
    let (m, n) = log_k.dim();
    let lp = p.mapv(f64::ln);
    let lq = q.mapv(f64::ln);
    // One log-domain sweep so the linear-domain kernel is bounded.
    let mut f = Array1::from_shape_fn(m, |i| lp[i] - log_sum_exp(log_k.row(i).iter().copied()));
    let mut g = Array1::from_shape_fn(n, |j| lq[j] - log_sum_exp((0..m).map(|i| log_k[[i, j]] + f[i])));
    let build = |f: &Array1<f64>, g: &Array1<f64>| Array2::from_shape_fn((m, n), |(i, j)| (log_k[[i, j]] + f[i] + g[j]).exp());
    let mut k = build(&f, &g);
    let mut u = Array1::<f64>::ones(m);
    let mut v = Array1::<f64>::ones(n);
    let mut done = false;
    for it in 0..max_iter {
        let kv = k.dot(&v);
        u = Array1::from_shape_fn(m, |i| if p[i] > 0.0 { p[i] / kv[i] } else { 0.0 });
        let ktu = k.t().dot(&u);
        let col_err: f64 = (0..n).map(|j| (v[j] * ktu[j] - q[j]).abs()).sum();
        v = Array1::from_shape_fn(n, |j| if q[j] > 0.0 { q[j] / ktu[j] } else { 0.0 });
        if col_err <= MARGINAL_TOL {
            let kv = k.dot(&v);
            let row_err: f64 = (0..m).map(|i| (u[i] * kv[i] - p[i]).abs()).sum();
            if row_err <= MARGINAL_TOL {
                done = true;
                break;
            }
        }
        let wild = |x: &f64| !x.is_finite() || (*x != 0.0 && !(1e-150..=1e150).contains(x));
        if it % 16 == 15 || u.iter().any(wild) || v.iter().any(wild) {
            if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
                break;
            }
            f.zip_mut_with(&u, |a, &b| *a += b.ln());
            g.zip_mut_with(&v, |a, &b| *a += b.ln());
            k = build(&f, &g);
            u.fill(1.0);
            v.fill(1.0);
        }
    }
    let t = Array2::from_shape_fn((m, n), |(i, j)| u[i] * k[[i, j]] * v[j]);
    let t = t.mapv(|x| if x.is_finite() { x } else { 0.0 });
    (t, done)
}

/// Per-point squared 1-D Wasserstein distance between distance profiles.
fn profile_cost(c1: &Array2<f64>, p: &Array1<f64>, c2: &Array2<f64>, q: &Array1<f64>) -> Array2<f64> {
    let sorted = |c: &Array2<f64>, w: &Array1<f64>| -> Vec<Vec<(f64, f64)>> {
        c.rows()
            .into_iter()
            .map(|row| {
                let mut v: Vec<(f64, f64)> = row.iter().copied().zip(w.iter().copied()).collect();
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                v
            })
            .collect()
    };
    let (s1, s2) = (sorted(c1, p), sorted(c2, q));
    Array2::from_shape_fn((c1.nrows(), c2.nrows()), |(i, j)| {
        let (a, b) = (&s1[i], &s2[j]);
        let (mut ia, mut ib) = (0, 0);
        let (mut ra, mut rb) = (a[0].1, b[0].1);
        let mut total = 0.0;
        while ia < a.len() && ib < b.len() {
            let w = ra.min(rb);
            let d = a[ia].0 - b[ib].0;
            total += w * d * d;
            ra -= w;
            rb -= w;
            if ra <= 1e-15 {
                ia += 1;
                ra = a.get(ia).map_or(0.0, |x| x.1);
            }
            if rb <= 1e-15 {
                ib += 1;
                rb = b.get(ib).map_or(0.0, |x| x.1);
            }
        }
        total
    })
}

fn descend(
    c1: &Array2<f64>,
    c2: &Array2<f64>,
    start: Array2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    opts: &GwOptions,
) -> (Array2<f64>, f64, bool) {
    let mut t = start;
    let mut best = (t.clone(), gw_objective(c1, c2, &t));
    for _ in 0..opts.iters {
        let grad = local_cost(c1, c2, &t) * 2.0;
        let log_k = Array2::from_shape_fn(t.dim(), |(i, j)| t[[i, j]].ln() - grad[[i, j]] / opts.epsilon);
        let (next, _) = sinkhorn(&log_k, p, q, STEP_INNER);
        let change: f64 = (&next - &t).iter().map(|x| x.abs()).sum();
        t = next;
        let value = gw_objective(c1, c2, &t);
        if value < best.1 {
            best = (t.clone(), value);
        }
        if change <= STATIONARY_TOL {
            break;
        }
    }
    let (t, ok) = sinkhorn(&best.0.mapv(f64::ln), p, q, MAX_INNER);
    let value = gw_objective(c1, c2, &t);
    (t, value, ok)
}

fn is_uniform(w: &Array1<f64>) -> bool {
    let u = 1.0 / w.len() as f64;
    w.iter().all(|&x| (x - u).abs() <= 1e-12)
}

/// Entropic mirror-descent GW between two clouds with Euclidean intra-cloud costs.
pub fn gw_entropic(a: &PointCloud, b: &PointCloud, opts: &GwOptions) -> Result<GwResult> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", opts.epsilon)));
    }
    for (name, c) in [("first", a), ("second", b)] {
        if c.is_empty() || c.len() > MAX_POINTS {
            return Err(Error::InvalidArgument(format!("{name} cloud has {} points, expected 1..={MAX_POINTS}", c.len())));
        }
    }
    let (c1, c2) = (a.distances(), b.distances());
    let max = |d: &Array2<f64>| d.iter().copied().fold(0.0, f64::max);
    let (m1, m2) = (max(&c1), max(&c2));
    let div = |d: Array2<f64>, m: f64| if m > 0.0 { d / m } else { d };
    let (c1, c2) = match opts.scale {
        GwScale::Raw => (c1, c2),
        GwScale::Each => (div(c1, m1), div(c2, m2)),
        GwScale::Joint => (div(c1, m1.max(m2)), div(c2, m1.max(m2))),
    };
    let (p, q) = (&a.weights, &b.weights);

    let product = Array2::from_shape_fn((p.len(), q.len()), |(i, j)| p[i] * q[j]);
    let profile = profile_cost(&c1, p, &c2, q);
    let scale_c = profile.iter().copied().fold(0.0, f64::max).max(1e-300);
    let (profile_start, _) = sinkhorn(&profile.mapv(|x| -x / (opts.epsilon * scale_c)), p, q, MAX_INNER);

    let mut best: Option<GwResult> = None;
    for start in [product, profile_start] {
        let (t, value, converged) = descend(&c1, &c2, start, p, q, opts);
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(GwResult { value, coupling: t, converged });
        }
    }
    let mut best = best.expect("two starts");
    if p.len() == q.len() && is_uniform(p) && is_uniform(q) {
        let pi = linear_assignment(&best.coupling.mapv(|x| -x));
        let m = p.len();
        let mut perm = Array2::zeros((m, m));
        for (i, &j) in pi.iter().enumerate() {
            perm[[i, j]] = 1.0 / m as f64;
        }
        let value = gw_objective(&c1, &c2, &perm);
        if value < best.value {
            best = GwResult { value, coupling: perm, converged: true };
        }
    }
    Ok(best)
}
