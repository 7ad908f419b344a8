//! Noising processes, regression targets and samplers.
//!
//! `t = 0` is the prior and `t = 1` is data.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::{normal_matrix, Rand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolantKind {
    /// Conditional flow matching with independent coupling.
    Cfm,
    /// Variance-preserving diffusion with noise prediction.
    Ddpm,
    /// Variance-exploding noise, used for analysis only.
    Ve,
}

impl InterpolantKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cfm => "cfm",
            Self::Ddpm => "ddpm",
            Self::Ve => "ve",
        }
    }
}

impl fmt::Display for InterpolantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterpolantKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cfm" => Ok(Self::Cfm),
            "ddpm" => Ok(Self::Ddpm),
            "ve" => Ok(Self::Ve),
            other => Err(Error::InvalidArgument(format!("unknown interpolant `{other}` (expected cfm, ddpm or ve)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantSpec {
    pub kind: InterpolantKind,
    pub sigma_min: f64,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub sigma_max: f64,
    /// `alpha_bar[n]` for `n = 0..=steps`, with `alpha_bar[0] = 1`.
    alpha_bar: Vec<f64>,
}

impl InterpolantSpec {
    pub fn new(kind: InterpolantKind) -> Self {
        let mut s =
            Self { kind, sigma_min: 1e-3, steps: 1000, beta_min: 1e-4, beta_max: 0.02, sigma_max: 1.0, alpha_bar: Vec::new() };
        s.refresh();
        s
    }

    pub fn cfm() -> Self {
        Self::new(InterpolantKind::Cfm)
    }

    pub fn ddpm() -> Self {
        Self::new(InterpolantKind::Ddpm)
    }

    pub fn ve(sigma_max: f64) -> Self {
        Self { sigma_max, ..Self::new(InterpolantKind::Ve) }
    }

    pub fn with_sigma_min(mut self, sigma_min: f64) -> Self {
        self.sigma_min = sigma_min;
        self
    }

    pub fn with_sigma_max(mut self, sigma_max: f64) -> Self {
        self.sigma_max = sigma_max;
        self
    }

    pub fn with_diffusion(mut self, steps: usize, beta_min: f64, beta_max: f64) -> Self {
        self.steps = steps;
        self.beta_min = beta_min;
        self.beta_max = beta_max;
        self.refresh();
        self
    }

    fn refresh(&mut self) {
        let mut acc = 1.0;
        self.alpha_bar = std::iter::once(1.0)
            .chain((1..=self.steps).map(|n| {
                acc *= 1.0 - self.beta(n);
                acc
            }))
            .collect();
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_min must be positive, got {}", self.sigma_min)));
        }
        if self.steps < 1 {
            return Err(Error::InvalidArgument("diffusion steps must be at least 1".into()));
        }
        if !(0.0 < self.beta_min && self.beta_min < self.beta_max && self.beta_max < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "beta range must satisfy 0 < min < max < 1, got [{}, {}]",
                self.beta_min, self.beta_max
            )));
        }
        if !(self.sigma_max > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_max must be positive, got {}", self.sigma_max)));
        }
        Ok(())
    }

    /// `beta_n` for diffusion step `n` in `1..=steps`, linear in `n`.
    pub fn beta(&self, n: usize) -> f64 {
        if self.steps == 1 {
            return self.beta_min;
        }
        self.beta_min + (self.beta_max - self.beta_min) * (n - 1) as f64 / (self.steps - 1) as f64
    }

    /// Diffusion step for time `t`: `round((1 - t) * steps)`.
    pub fn step_index(&self, t: f64) -> usize {
        (((1.0 - t) * self.steps as f64) + 0.5).floor().clamp(0.0, self.steps as f64) as usize
    }

    pub fn alpha_bar(&self, t: f64) -> f64 {
        self.alpha_bar[self.step_index(t)]
    }

    /// Coefficients `(a, b, c)` of the mean path `a z0 + b z1` and the noise scale `c`.
    pub fn coefficients(&self, t: f64) -> (f64, f64, f64) {
        match self.kind {
            InterpolantKind::Cfm => (1.0 - t, t, self.sigma_min),
            InterpolantKind::Ddpm => {
                let ab = self.alpha_bar(t);
                (0.0, ab.sqrt(), (1.0 - ab).sqrt())
            }
            InterpolantKind::Ve => (0.0, 1.0, self.sigma_t(t)),
        }
    }

    /// Noise standard deviation around the mean path.
    pub fn sigma_t(&self, t: f64) -> f64 {
        match self.kind {
            InterpolantKind::Cfm => self.sigma_min,
            InterpolantKind::Ddpm => (1.0 - self.alpha_bar(t)).sqrt(),
            InterpolantKind::Ve => self.sigma_max * (1.0 - t),
        }
    }

    /// Signal-to-noise ratio for unit-variance data.
    pub fn snr(&self, t: f64) -> f64 {
        match self.kind {
            InterpolantKind::Cfm => t * t / ((1.0 - t).powi(2) + self.sigma_min.powi(2)),
            InterpolantKind::Ddpm => {
                let ab = self.alpha_bar(t);
                ab / (1.0 - ab)
            }
            InterpolantKind::Ve => 1.0 / self.sigma_t(t).powi(2),
        }
    }

    /// Noise-free path through `z0` and `x`; equals `x` exactly at `t = 1`.
    ///
    /// Used to clamp known coordinates during conditional sampling.
    pub fn clean_path(&self, z0: f64, x: f64, t: f64) -> f64 {
        match self.kind {
            InterpolantKind::Cfm => (1.0 - t) * z0 + t * x,
            InterpolantKind::Ddpm => {
                let ab = self.alpha_bar(t);
                ab.sqrt() * x + (1.0 - ab).sqrt() * z0
            }
            InterpolantKind::Ve => x + self.sigma_t(t) * z0,
        }
    }
}

/// A noised sample together with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Noised {
    pub z_t: Array2<f64>,
    pub eps: Array2<f64>,
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange(t))
    }
}

/// Draws `z_t` between prior sample `z0` and data `z1`.
pub fn interpolate(z0: &Array2<f64>, z1: &Array2<f64>, t: f64, spec: &InterpolantSpec, rng: &mut Rand) -> Result<Noised> {
    check_time(t)?;
    if z0.dim() != z1.dim() {
        return Err(Error::shape("interpolate", format!("{:?} vs {:?}", z0.dim(), z1.dim())));
    }
    let (r, c) = z1.dim();
    let eps = normal_matrix(rng, r, c);
    let (a, b, s) = spec.coefficients(t);
    let z_t = z1 * b + &eps * s;
    let z_t = if a != 0.0 { z_t + z0 * a } else { z_t };
    Ok(Noised { z_t, eps })
}

/// The vector the network regresses against at `(z_t, t)`.
pub fn regression_target(z0: &Array2<f64>, z1: &Array2<f64>, noised: &Noised, t: f64, spec: &InterpolantSpec) -> Array2<f64> {
    match spec.kind {
        InterpolantKind::Cfm => z1 - z0,
        InterpolantKind::Ddpm => noised.eps.clone(),
        InterpolantKind::Ve => (z1 - &noised.z_t) / spec.sigma_t(t).max(1e-8),
    }
}

/// Integrates the learned field from a prior sample to `t = 1`.
///
/// `field(z, t)` returns the network output for state `z`; `after_step(z, t)`
/// runs after every update with the time just reached and may overwrite parts
/// of `z`. Flow matching uses explicit Euler with `nfes` steps; diffusion uses
/// ancestral sampling over all `steps` and ignores `nfes`.
pub fn generate<F, H>(
    mut field: F,
    prior: Array2<f64>,
    spec: &InterpolantSpec,
    nfes: usize,
    rng: &mut Rand,
    mut after_step: H,
) -> Result<Array2<f64>>
where
    F: FnMut(&Array2<f64>, f64) -> Result<Array2<f64>>,
    H: FnMut(&mut Array2<f64>, f64),
{
    if nfes < 1 {
        return Err(Error::InvalidArgument("nfes must be at least 1".into()));
    }
    let mut z = prior;
    let mut eval = |z: &Array2<f64>, t: f64| -> Result<Array2<f64>> {
        let v = field(z, t)?;
        if v.dim() != z.dim() {
            return Err(Error::shape("generate", format!("field returned {:?} for state {:?}", v.dim(), z.dim())));
        }
        Ok(v)
    };
    match spec.kind {
        InterpolantKind::Cfm => {
            let dt = 1.0 / nfes as f64;
            for i in 0..nfes {
                let t = i as f64 * dt;
                let v = eval(&z, t)?;
                z.scaled_add(dt, &v);
                let next = if i + 1 == nfes { 1.0 } else { (i + 1) as f64 * dt };
                after_step(&mut z, next);
            }
        }
        InterpolantKind::Ddpm => {
            let steps = spec.steps;
            for n in (1..=steps).rev() {
                let t = 1.0 - n as f64 / steps as f64;
                let eps_hat = eval(&z, t)?;
                let beta = spec.beta(n);
                let ab = spec.alpha_bar[n];
                let coef = beta / (1.0 - ab).sqrt();
                z.scaled_add(-coef, &eps_hat);
                z /= (1.0 - beta).sqrt();
                if n > 1 {
                    let ab_prev = spec.alpha_bar[n - 1];
                    let var = (1.0 - ab_prev) / (1.0 - ab) * beta;
                    z.scaled_add(var.sqrt(), &normal_matrix(rng, z.nrows(), z.ncols()));
                }
                let next = 1.0 - (n - 1) as f64 / steps as f64;
                after_step(&mut z, next);
            }
        }
        InterpolantKind::Ve => {
            return Err(Error::InvalidArgument("the ve interpolant has no sampler".into()));
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    fn exact(sigma_min: f64) -> InterpolantSpec {
        InterpolantSpec::cfm().with_sigma_min(sigma_min)
    }

    #[test]
    fn cfm_endpoints_and_midpoint() {
        let spec = exact(1e-300);
        let z0 = array![[-1.0, 2.0]];
        let z1 = array![[1.0, 5.0]];
        let mut rng = seeded(0);
        assert_eq!(interpolate(&z0, &z1, 0.0, &spec, &mut rng).unwrap().z_t, z0);
        assert_eq!(interpolate(&z0, &z1, 1.0, &spec, &mut rng).unwrap().z_t, z1);
        let mid = interpolate(&z0, &z1, 0.5, &spec, &mut rng).unwrap().z_t;
        assert!((mid[[0, 0]]).abs() < 1e-12);
    }

    #[test]
    fn ddpm_data_endpoint_is_exact() {
        let spec = InterpolantSpec::ddpm();
        let z1 = array![[0.3, -0.7], [1.5, 2.0]];
        let z0 = Array2::zeros((2, 2));
        let n = interpolate(&z0, &z1, 1.0, &spec, &mut seeded(1)).unwrap();
        assert_eq!(n.z_t, z1);
        assert_eq!(spec.alpha_bar(1.0), 1.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let spec = InterpolantSpec::cfm();
        assert!(interpolate(&Array2::zeros((2, 1)), &Array2::zeros((1, 2)), 0.5, &spec, &mut seeded(0)).is_err());
        assert!(interpolate(&Array2::zeros((1, 1)), &Array2::zeros((1, 1)), 2.0, &spec, &mut seeded(0)).is_err());
    }

    #[test]
    fn cfm_targets() {
        let spec = InterpolantSpec::cfm();
        let z0 = Array2::zeros((3, 1));
        let z1 = Array2::ones((3, 1));
        for t in [0.0, 0.3, 1.0] {
            let n = interpolate(&z0, &z1, t, &spec, &mut seeded(2)).unwrap();
            assert_eq!(regression_target(&z0, &z1, &n, t, &spec), Array2::ones((3, 1)));
            let n = interpolate(&z1, &z1, t, &spec, &mut seeded(2)).unwrap();
            assert_eq!(regression_target(&z1, &z1, &n, t, &spec), Array2::zeros((3, 1)));
        }
    }

    #[test]
    fn ddpm_target_replays_noise() {
        let spec = InterpolantSpec::ddpm();
        let z0 = Array2::zeros((4, 2));
        let z1 = Array2::ones((4, 2));
        let a = interpolate(&z0, &z1, 0.4, &spec, &mut seeded(9)).unwrap();
        let b = interpolate(&z0, &z1, 0.4, &spec, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(regression_target(&z0, &z1, &a, 0.4, &spec), b.eps);
    }

    #[test]
    fn ve_target_recovers_data() {
        let spec = InterpolantSpec::ve(1.0);
        let z0 = Array2::zeros((2, 2));
        let z1 = array![[1.0, 2.0], [3.0, 4.0]];
        let n = interpolate(&z0, &z1, 0.25, &spec, &mut seeded(4)).unwrap();
        let u = regression_target(&z0, &z1, &n, 0.25, &spec);
        let back = &n.z_t + &(&u * 0.75);
        assert!(back.iter().zip(z1.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn snr_increases_for_ve_and_ddpm() {
        for spec in [InterpolantSpec::ve(2.0), InterpolantSpec::ddpm()] {
            let mut prev = spec.snr(0.0);
            for i in 1..1000 {
                let s = spec.snr(i as f64 / 1000.0);
                assert!(s >= prev, "{} at {i}", spec.kind);
                prev = s;
            }
            assert!(spec.snr(0.99) > spec.snr(0.01));
        }
    }

    #[test]
    fn ddpm_forward_variance() {
        let spec = InterpolantSpec::ddpm();
        let t = 0.7;
        let z1 = Array2::from_elem((100_000, 1), 0.5);
        let z0 = Array2::zeros((100_000, 1));
        let z = interpolate(&z0, &z1, t, &spec, &mut seeded(17)).unwrap().z_t;
        let m = z.mean().unwrap();
        let var = z.mapv(|v| (v - m) * (v - m)).sum() / (z.len() - 1) as f64;
        let expect = 1.0 - spec.alpha_bar(t);
        assert!((var / expect - 1.0).abs() < 0.02, "{var} vs {expect}");
    }

    #[test]
    fn zero_and_constant_fields() {
        let prior = array![[0.2, -1.0], [3.0, 0.5]];
        let spec = InterpolantSpec::cfm();
        let out = generate(|z, _| Ok(Array2::zeros(z.raw_dim())), prior.clone(), &spec, 7, &mut seeded(0), |_, _| {}).unwrap();
        assert_eq!(out, prior);
        for nfes in [1, 3, 10, 200] {
            let out =
                generate(|z, _| Ok(Array2::from_elem(z.raw_dim(), 0.75)), prior.clone(), &spec, nfes, &mut seeded(0), |_, _| {})
                    .unwrap();
            let expect = &prior + 0.75;
            assert!(out.iter().zip(expect.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn euler_on_linear_field_converges_first_order() {
        let prior = array![[1.0], [-2.0]];
        let spec = InterpolantSpec::cfm();
        let err = |nfes: usize| {
            let out = generate(|z, _| Ok(-z), prior.clone(), &spec, nfes, &mut seeded(0), |_, _| {}).unwrap();
            (out[[0, 0]] - (-1f64).exp()).abs()
        };
        let (e1, e2, e3) = (err(50), err(100), err(200));
        assert!(e2 < e1 && e3 < e2);
        assert!((e1 / e2 - 2.0).abs() < 0.1 && (e2 / e3 - 2.0).abs() < 0.1);
        assert!(e3 < 1e-3);
    }

    #[test]
    fn field_with_wrong_shape_rejected() {
        let spec = InterpolantSpec::cfm();
        let r = generate(|_, _| Ok(Array2::zeros((1, 1))), Array2::zeros((2, 1)), &spec, 3, &mut seeded(0), |_, _| {});
        assert!(r.is_err());
    }

    #[test]
    fn clamping_hook_sees_final_time() {
        for spec in [InterpolantSpec::cfm(), InterpolantSpec::ddpm().with_diffusion(20, 1e-4, 0.02)] {
            let prior = array![[0.3, 0.9]];
            let x = 4.25;
            let out = generate(
                |z, _| Ok(Array2::from_elem(z.raw_dim(), 1.0)),
                prior.clone(),
                &spec,
                9,
                &mut seeded(3),
                |z, t| z[[0, 1]] = spec.clean_path(prior[[0, 1]], x, t),
            )
            .unwrap();
            assert_eq!(out[[0, 1]], x);
        }
    }
}
