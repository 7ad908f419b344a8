//! Mutual information of aggregated noisy features and distance growth of
//! noised positions.
//!
//! Positions live on a line and the aggregation region is `[-r, r]` around the
//! node, so its measure is `2r`.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Simpson nodes per axis.
pub const SIMPSON_NODES: usize = 401;

/// `1 - (a - b)^2`.
pub fn default_rho(a: f64, b: f64) -> f64 {
    1.0 - (a - b) * (a - b)
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    debug_assert!(n % 2 == 1 && n >= 3);
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// `A = ∫∫ rho(x, y)` and `B = ∫ rho(0, x)` over `[-r, r]` by composite Simpson.
pub fn correlation_integrals<F: Fn(f64, f64) -> f64>(r: f64, rho: F) -> (f64, f64) {
    let n = SIMPSON_NODES;
    let h = 2.0 * r / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| -r + i as f64 * h).collect();
    let w = simpson_weights(n, h);
    let mut a = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let inner: f64 = x.iter().zip(&w).map(|(xj, wj)| wj * rho(*xi, *xj)).sum();
        a += wi * inner;
    }
    let b = x.iter().zip(&w).map(|(xi, wi)| wi * rho(0.0, *xi)).sum();
    (a, b)
}

fn check_domain(r: f64, snr: f64) -> Result<()> {
    if !(r > 0.0) || !(snr > 0.0) || !r.is_finite() || !snr.is_finite() {
        return Err(Error::InvalidArgument(format!("need r > 0 and snr > 0, got r={r} snr={snr}")));
    }
    Ok(())
}

/// `½ ln((2r/c + A) / (2r/c + A - B²))` with `A`, `B` by quadrature.
pub fn mutual_information_numeric<F: Fn(f64, f64) -> f64>(r: f64, snr: f64, rho: F) -> Result<f64> {
    check_domain(r, snr)?;
    let (a, b) = correlation_integrals(r, rho);
    mi_from_integrals(r, snr, a, b)
}

fn mi_from_integrals(r: f64, snr: f64, a: f64, b: f64) -> Result<f64> {
    let num = 2.0 * r / snr + a;
    let den = num - b * b;
    if !(den > 0.0) {
        return Err(Error::NonPositiveDenominator { r, snr, denominator: den });
    }
    Ok(0.5 * (num / den).ln())
}

/// Exact value of [`mutual_information_numeric`] for [`default_rho`]:
/// `A = 4r² - 8r⁴/3`, `B = 2r - 2r³/3`.
pub fn mutual_information_exact(r: f64, snr: f64) -> Result<f64> {
    check_domain(r, snr)?;
    let a = 4.0 * r * r - 8.0 * r.powi(4) / 3.0;
    let b = 2.0 * r - 2.0 * r.powi(3) / 3.0;
    mi_from_integrals(r, snr, a, b)
}

/// Closed form `κ(r, c) = (2/c + 4r - 8r³/3) / (2/c + 4r⁶/9)` whose half-log is
/// the reported mutual information.
pub fn kappa_closed(r: f64, c: f64) -> f64 {
    (2.0 / c + 4.0 * r - 8.0 * r.powi(3) / 3.0) / (2.0 / c + 4.0 * r.powi(6) / 9.0)
}

/// `κ` implied by the exact integrals, `(2/c + 4r - 8r³/3) / (2/c - 4r⁵/9)`.
pub fn kappa_exact(r: f64, c: f64) -> f64 {
    (2.0 / c + 4.0 * r - 8.0 * r.powi(3) / 3.0) / (2.0 / c - 4.0 * r.powi(5) / 9.0)
}

/// Sign-determining factor of `dκ/dr` for [`kappa_closed`]:
/// `4cr⁸ - 10cr⁶ - 6r⁵ - 18r² + 9`.
pub fn kappa_slope_numerator(r: f64, c: f64) -> f64 {
    4.0 * c * r.powi(8) - 10.0 * c * r.powi(6) - 6.0 * r.powi(5) - 18.0 * r * r + 9.0
}

/// Full derivative `dκ/dr = 18c · numerator / (2cr⁶ + 9)²`.
pub fn kappa_slope(r: f64, c: f64) -> f64 {
    18.0 * c * kappa_slope_numerator(r, c) / (2.0 * c * r.powi(6) + 9.0).powi(2)
}

/// Radius maximizing [`kappa_closed`] for SNR `c`, by bisection on the sign of
/// the slope numerator over `[1e-4, 1]` to tolerance `1e-8`.
pub fn optimal_radius(c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {c}")));
    }
    let (mut lo, mut hi) = (1e-4, 1.0);
    let f = |r: f64| kappa_slope_numerator(r, c);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::NoSignChange { lo, hi, snr: c });
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `n` SNR values log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusRow {
    pub snr: f64,
    pub r_star: f64,
    /// `½ ln κ(r*, c)` in nats.
    pub mi: f64,
}

/// Optimal radius and the mutual information it achieves for each SNR.
pub fn radius_table(snrs: &[f64]) -> Result<Vec<RadiusRow>> {
    snrs.iter()
        .map(|&c| {
            let r = optimal_radius(c)?;
            Ok(RadiusRow { snr: c, r_star: r, mi: 0.5 * kappa_closed(r, c).ln() })
        })
        .collect()
}

/// Mutual information between the center value and the aggregate of `m`
/// discretized noisy values, from the Gaussian covariance of the pair.
///
/// Midpoint nodes with weight `w = 2r/m`; each node's noise variance is
/// `σ²/w` with `σ² = 1/snr`, so the aggregate noise variance is `2r/snr`.
pub fn gaussian_block_mi<F: Fn(f64, f64) -> f64>(r: f64, snr: f64, rho: F, m: usize) -> Result<f64> {
    check_domain(r, snr)?;
    let w = 2.0 * r / m as f64;
    let x: Vec<f64> = (0..m).map(|j| -r + (j as f64 + 0.5) * w).collect();
    let noise = 1.0 / snr / w;
    let mut cov = Array2::from_shape_fn((m, m), |(j, k)| rho(x[j], x[k]));
    for j in 0..m {
        cov[[j, j]] += noise;
    }
    let weights = Array1::from_elem(m, w);
    let var_y = weights.dot(&cov.dot(&weights));
    let cov_xy: f64 = x.iter().map(|&xj| w * rho(0.0, xj)).sum();
    let det = var_y - cov_xy * cov_xy;
    if !(det > 0.0) || !(var_y > 0.0) {
        return Err(Error::NonPositiveDenominator { r, snr, denominator: det });
    }
    // I = ½ ln(σx² σy² / det), σx² = 1
    Ok(0.5 * (var_y / det).ln())
}

/// Expected squared distance of two noised positions at clean distance `γ`:
/// `(as printed, covariance consistent)` =
/// `(2(1-t) + 2ρ(1-t) + tγ², 2(1-t)(1-ρ) + γ²)`.
pub fn expected_sq_distance(t: f64, gamma: f64, rho: f64) -> (f64, f64) {
    let printed = 2.0 * (1.0 - t) + 2.0 * rho * (1.0 - t) + t * gamma * gamma;
    let consistent = 2.0 * (1.0 - t) * (1.0 - rho) + gamma * gamma;
    (printed, consistent)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Monte-Carlo mean of `(X - Y)²` for jointly Gaussian `X ~ N(0, 1-t)`,
/// `Y ~ N(γ, 1-t)` with covariance `(1-t)ρ`.
pub fn mc_sq_distance(t: f64, gamma: f64, rho: f64, n_draws: usize, seed: u64) -> Result<McEstimate> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("correlation {rho} outside [-1, 1]")));
    }
    if n_draws < 2 {
        return Err(Error::InvalidArgument("need at least two draws".into()));
    }
    let mut rng = seeded(seed);
    let s = (1.0 - t).sqrt();
    let orth = (1.0 - rho * rho).max(0.0).sqrt();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_draws {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let x = s * z1;
        let y = gamma + s * (rho * z1 + orth * z2);
        let d = (x - y) * (x - y);
        sum += d;
        sum_sq += d * d;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { mean, std_err: (var / n).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_matches_exact_integrals() {
        for r in [0.05, 0.3, 0.7, 1.0] {
            let (a, b) = correlation_integrals(r, default_rho);
            assert!((a - (4.0 * r * r - 8.0 * r.powi(4) / 3.0)).abs() < 1e-13);
            assert!((b - (2.0 * r - 2.0 * r.powi(3) / 3.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn unit_radius_unit_snr() {
        let mi = mutual_information_numeric(1.0, 1.0, default_rho).unwrap();
        assert!((mi - 0.5 * (15.0f64 / 7.0).ln()).abs() < 1e-12);
        assert!((kappa_exact(1.0, 1.0) - 15.0 / 7.0).abs() < 1e-15);
        assert!((kappa_closed(1.0, 1.0) - 15.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn vanishing_radius_carries_no_information() {
        let mi = mutual_information_numeric(1e-6, 1.0, default_rho).unwrap();
        assert!(mi < 1e-5);
        assert!((kappa_closed(1e-9, 3.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_correlation_reported() {
        // 2/c - 4r⁵/9 < 0 for large SNR at r = 1
        let e = mutual_information_numeric(1.0, 10.0, default_rho).unwrap_err();
        assert!(matches!(e, Error::NonPositiveDenominator { .. }));
        assert!(mutual_information_numeric(0.5, 0.0, default_rho).is_err());
    }

    #[test]
    fn covariance_oracle_agrees() {
        let mi = mutual_information_numeric(0.5, 2.0, default_rho).unwrap();
        let oracle = gaussian_block_mi(0.5, 2.0, default_rho, 200).unwrap();
        assert!((mi - oracle).abs() < 1e-3, "{mi} vs {oracle}");
    }

    #[test]
    fn optimal_radius_at_unit_snr() {
        let r = optimal_radius(1.0).unwrap();
        assert!((r - 0.652).abs() < 0.005, "{r}");
        assert!(kappa_slope_numerator(0.65, 1.0) > 0.0 && kappa_slope_numerator(0.66, 1.0) < 0.0);
        for c in [0.25, 1.0, 8.0] {
            let r = optimal_radius(c).unwrap();
            let k = kappa_closed(r, c);
            assert!(kappa_closed(r + 0.01, c) <= k && kappa_closed(r - 0.01, c) <= k);
        }
    }

    #[test]
    fn slope_numerator_matches_derivative() {
        for (r, c) in [(0.3, 0.5), (0.7, 2.0), (0.9, 8.0)] {
            let h = 1e-6;
            let fd = (kappa_closed(r + h, c) - kappa_closed(r - h, c)) / (2.0 * h);
            assert!((fd - kappa_slope(r, c)).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn optimal_radius_shrinks_with_snr() {
        let mut prev = f64::INFINITY;
        for c in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let r = optimal_radius(c).unwrap();
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn kappa_grows_with_snr_below_optimum() {
        let r = 0.4;
        let mut prev = 0.0;
        for i in 1..=100 {
            let k = kappa_closed(r, i as f64 * 0.1);
            assert!(k > prev);
            prev = k;
        }
    }

    #[test]
    fn squared_distance_examples() {
        assert_eq!(expected_sq_distance(1.0, 0.3, 0.2), (0.09, 0.09));
        let (_, c) = expected_sq_distance(0.0, 0.1, 0.0);
        assert!((c - 2.01).abs() < 1e-12);
        assert_eq!(expected_sq_distance(0.5, 0.0, 1.0), (2.0, 0.0));
        let mc = mc_sq_distance(0.0, 0.1, 0.0, 1_000_000, 1).unwrap();
        assert!((mc.mean / 2.01 - 1.0).abs() < 0.01);
        let mc = mc_sq_distance(0.5, 0.0, 1.0, 10_000, 1).unwrap();
        assert!(mc.mean.abs() < 1e-12);
    }

    #[test]
    fn mc_edge_cases() {
        assert_eq!(mc_sq_distance(1.0, 0.25, 0.3, 10_000, 3).unwrap().mean, 0.0625);
        let mc = mc_sq_distance(0.0, 0.0, -1.0, 100_000, 3).unwrap();
        assert!((mc.mean / 4.0 - 1.0).abs() < 0.02);
        assert!(mc_sq_distance(0.5, 0.0, 1.5, 10_000, 0).is_err());
    }
}
