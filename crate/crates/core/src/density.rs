//! Finite-sample distribution of the GPD quantile estimator
//! `q_hat = sigma_hat / psi(xi_hat)`.
//!
//! `(xi_hat, sigma_hat)` is taken as bivariate normal with the asymptotic
//! covariance of the MLE at sample size `n`. The density of `q_hat` is
//!
//! ```text
//! f_q(z) = (n / (2 pi sigma sqrt(1 + 4xi + 5xi^2 + 2xi^3)))
//!          * Int du psi(u) exp{-(n/(1+2xi)) [ (u-xi)^2/(1+xi)
//!                + (u-xi)(z psi(u) - sigma)/((1+xi) sigma)
//!                + (z psi(u) - sigma)^2/(2 sigma^2) ]}
//! ```
//!
//! with `psi(u) = u / ((1-alpha)^(-u) - 1)`. The `u` integral is truncated to
//! `xi +- u_halfwidth_sds` marginal standard deviations of `xi_hat`.
//!
//! Moments are computed by 2-D Gauss–Hermite quadrature of
//! `v ((1-alpha)^(-u) - 1) / u` under the same normal law; direct quadrature
//! of the density ([`stats_by_quadrature`]) is kept as an independent route.

use rayon::prelude::*;
use serde::Serialize;

use crate::bias::{BiasSurface, SurfaceRow};
use crate::error::{Error, Result};
use crate::gpd::{expm1_ratio, quantile, ConfidenceLevel, GpdParams};
use crate::mle::{asymptotic_covariance, AsymptoticCovariance};
use crate::quadrature::{gauss_hermite_normal, Integrator};

/// Smallest sample size for which the normal approximation is trusted.
pub const VALIDATED_MIN_N: u64 = 50;
pub const VALIDATED_XI: (f64, f64) = (0.0, 0.5);
/// Gauss–Hermite nodes per axis for the moment computation.
pub const HERMITE_NODES: usize = 96;

const U_PANELS: usize = 8;
const Z_PANELS: usize = 32;
const MAX_EXPANSIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub u_halfwidth_sds: f64,
    pub z_expansion_factor: f64,
    pub max_refinements: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-8, u_halfwidth_sds: 10.0, z_expansion_factor: 1.5, max_refinements: 20 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.rel_tol < 1.0
            && self.u_halfwidth_sds > 0.0
            && self.z_expansion_factor > 1.0
            && self.max_refinements > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid quadrature configuration {self:?}")))
        }
    }

    fn integrator(&self, rel_tol: f64, panels: usize) -> Integrator {
        Integrator {
            rel_tol,
            abs_tol: 0.0,
            max_depth: self.max_refinements,
            initial_panels: panels,
            max_panels: 1 << 14,
        }
    }
}

/// Parameters `(n, alpha, sigma, xi)` of one finite-sample density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensitySpec {
    n: u64,
    alpha: ConfidenceLevel,
    sigma: f64,
    xi: f64,
    quad: QuadratureConfig,
    outside_validated_region: bool,
}

fn in_validated_region(n: u64, xi: f64) -> bool {
    n >= VALIDATED_MIN_N && (VALIDATED_XI.0..=VALIDATED_XI.1).contains(&xi)
}

impl DensitySpec {
    /// Spec inside the validated region `n >= 50`, `0 <= xi <= 0.5`.
    pub fn new(n: u64, alpha: ConfidenceLevel, sigma: f64, xi: f64) -> Result<Self> {
        if !in_validated_region(n, xi) {
            return Err(Error::OutsideValidatedRegion { n, xi });
        }
        Self::with_region_override(n, alpha, sigma, xi)
    }

    /// Spec anywhere the covariance exists (`n >= 1`, `xi > -0.5`); results
    /// outside the validated region carry `outside_validated_region = true`.
    pub fn with_region_override(n: u64, alpha: ConfidenceLevel, sigma: f64, xi: f64) -> Result<Self> {
        let p = GpdParams::new(sigma, xi)?;
        asymptotic_covariance(&p, n)?;
        Ok(Self {
            n,
            alpha,
            sigma,
            xi,
            quad: QuadratureConfig::default(),
            outside_validated_region: !in_validated_region(n, xi),
        })
    }

    pub fn with_quadrature(mut self, quad: QuadratureConfig) -> Result<Self> {
        quad.validate()?;
        self.quad = quad;
        Ok(self)
    }

    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn alpha(&self) -> ConfidenceLevel {
        self.alpha
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }
    pub fn outside_validated_region(&self) -> bool {
        self.outside_validated_region
    }

    pub fn params(&self) -> GpdParams {
        GpdParams::new(self.sigma, self.xi).expect("validated at construction")
    }

    pub fn covariance(&self) -> AsymptoticCovariance {
        asymptotic_covariance(&self.params(), self.n).expect("validated at construction")
    }

    /// The true quantile `q_alpha` being estimated.
    pub fn true_quantile(&self) -> f64 {
        quantile(&self.params(), self.alpha)
    }

    fn u_range(&self) -> (f64, f64) {
        let sd = (1.0 + self.xi) / (self.n as f64).sqrt();
        let h = self.quad.u_halfwidth_sds * sd;
        (self.xi - h, self.xi + h)
    }
}

/// Moments of the quantile estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileStats {
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    pub true_quantile: f64,
    pub normalization_defect: f64,
    pub outside_validated_region: bool,
}

/// `u / ((1 - alpha)^(-u) - 1)`, with the removable singularity at `u = 0`
/// filled in by `1 / -ln(1 - alpha)`.
pub fn psi(u: f64, level: ConfidenceLevel) -> f64 {
    1.0 / expm1_ratio(u, level.tail_log())
}

/// Pieces of the density integrand that do not depend on `(u, z)`.
struct Kernel {
    sigma: f64,
    xi: f64,
    tail_log: f64,
    rate: f64,
    prefactor: f64,
}

impl Kernel {
    fn new(spec: &DensitySpec) -> Self {
        let (n, xi, sigma) = (spec.n as f64, spec.xi, spec.sigma);
        let poly = 1.0 + 4.0 * xi + 5.0 * xi * xi + 2.0 * xi * xi * xi;
        Self {
            sigma,
            xi,
            tail_log: spec.alpha.tail_log(),
            rate: n / (1.0 + 2.0 * xi),
            prefactor: n / (2.0 * std::f64::consts::PI * sigma * poly.sqrt()),
        }
    }

    #[inline]
    fn integrand(&self, u: f64, z: f64) -> f64 {
        let ps = 1.0 / expm1_ratio(u, self.tail_log);
        let du = u - self.xi;
        let dv = z * ps - self.sigma;
        let q = du * du / (1.0 + self.xi)
            + du * dv / ((1.0 + self.xi) * self.sigma)
            + dv * dv / (2.0 * self.sigma * self.sigma);
        ps * (-self.rate * q).exp()
    }
}

fn density_with(spec: &DensitySpec, kernel: &Kernel, z: f64, rel_tol: f64) -> Result<f64> {
    let (lo, hi) = spec.u_range();
    let integ = spec.quad.integrator(rel_tol, U_PANELS);
    let v = integ.integrate_scalar(|u| kernel.integrand(u, z), lo, hi)?;
    Ok((kernel.prefactor * v).max(0.0))
}

/// Finite-sample density `f_q(z)` of the quantile estimator.
pub fn density(spec: &DensitySpec, z: f64) -> Result<f64> {
    density_with(spec, &Kernel::new(spec), z, spec.quad.rel_tol)
}

/// Standard normal CDF.
fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(q_hat <= q)`.
///
/// Integrates the normal law of `sigma_hat` given `xi_hat = u` up to
/// `q psi(u)` in closed form, leaving one adaptive integral over `u`.
pub fn cdf_of_estimator(spec: &DensitySpec, q: f64) -> Result<f64> {
    if q.is_nan() {
        return Err(Error::InvalidParameter("cdf argument is NaN".into()));
    }
    if q == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if q == f64::INFINITY {
        return Ok(1.0);
    }
    let cov = spec.covariance();
    let sd_u = cov.cov_matrix[0][0].sqrt();
    let (_, cond_var) = cov.conditional_scale(spec.xi);
    let cond_sd = cond_var.sqrt();
    let level = spec.alpha;
    let norm = 1.0 / (sd_u * (2.0 * std::f64::consts::PI).sqrt());
    let integrand = |u: f64| {
        let w = (u - spec.xi) / sd_u;
        let (m, _) = cov.conditional_scale(u);
        let t = (q * psi(u, level) - m) / cond_sd;
        norm * (-0.5 * w * w).exp() * normal_cdf(t)
    };
    let (lo, hi) = spec.u_range();
    let v = spec
        .quad
        .integrator(spec.quad.rel_tol, U_PANELS)
        .integrate_scalar(integrand, lo, hi)?;
    Ok(v.clamp(0.0, 1.0))
}

/// Mean, variance and bias by Gauss–Hermite quadrature in whitened
/// coordinates. Exact in `sigma_hat` (the integrand is polynomial there).
pub fn stats(spec: &DensitySpec) -> Result<QuantileStats> {
    let (nodes, weights) = gauss_hermite_normal(HERMITE_NODES);
    let cov = spec.covariance();
    let l = cov.cholesky();
    let c = spec.alpha.tail_log();

    let mut g = Vec::with_capacity(nodes.len() * nodes.len());
    for (&w1, &p1) in nodes.iter().zip(&weights) {
        let u = spec.xi + l[0][0] * w1;
        let h = expm1_ratio(u, c);
        for (&w2, &p2) in nodes.iter().zip(&weights) {
            let v = spec.sigma + l[1][0] * w1 + l[1][1] * w2;
            g.push((p1 * p2, v * h));
        }
    }
    let mass: f64 = g.iter().map(|(p, _)| p).sum();
    let mean = g.iter().map(|(p, x)| p * x).sum::<f64>() / mass;
    let variance = g.iter().map(|(p, x)| p * (x - mean) * (x - mean)).sum::<f64>() / mass;
    let true_quantile = spec.true_quantile();
    if !(mean.is_finite() && variance.is_finite()) {
        return Err(Error::Quadrature {
            rel_tol: spec.quad.rel_tol,
            max_refinements: spec.quad.max_refinements,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        });
    }
    Ok(QuantileStats {
        mean,
        variance,
        bias: mean - true_quantile,
        true_quantile,
        normalization_defect: (mass - 1.0).abs(),
        outside_validated_region: spec.outside_validated_region,
    })
}

/// Integrals of `f_q`, `((z - c)/s) f_q` and `((z - c)/s)^2 f_q` over the
/// real line, starting from `[q - 8 s, q + 8 s]` and growing geometrically on
/// each side until a new segment adds less than `rel_tol` of every running
/// total.
fn z_moments(spec: &DensitySpec, center: f64, scale: f64) -> Result<[f64; 3]> {
    let kernel = Kernel::new(spec);
    let rel_tol = spec.quad.rel_tol;
    let inner_tol = 0.1 * rel_tol;
    let mut failure = None;
    let mut integrate = |a: f64, b: f64, panels: usize, abs_tol: f64| -> Result<[f64; 3]> {
        let integ = Integrator { abs_tol, ..spec.quad.integrator(inner_tol, panels) };
        let est = integ.integrate(
            |z| {
                let f = match density_with(spec, &kernel, z, inner_tol) {
                    Ok(f) => f,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                };
                let t = (z - center) / scale;
                [f, t * f, t * t * f]
            },
            a,
            b,
        )?;
        Ok(est.value)
    };

    let q = spec.true_quantile();
    let (a0, b0) = (q - 8.0 * scale, q + 8.0 * scale);
    let mut total = integrate(a0, b0, Z_PANELS, 0.0)?;
    let (mut a, mut b) = (a0, b0);
    let (mut left_done, mut right_done) = (false, false);
    let factor = spec.quad.z_expansion_factor;
    for _ in 0..MAX_EXPANSIONS {
        if left_done && right_done {
            break;
        }
        let grow = (factor - 1.0) * (b - a);
        let abs_tol = 0.1 * rel_tol * total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !left_done {
            let seg = integrate(a - grow, a, 4, abs_tol)?;
            a -= grow;
            left_done = negligible(&seg, &total, rel_tol);
            add(&mut total, &seg);
        }
        if !right_done {
            let seg = integrate(b, b + grow, 4, abs_tol)?;
            b += grow;
            right_done = negligible(&seg, &total, rel_tol);
            add(&mut total, &seg);
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    if !(left_done && right_done) {
        return Err(Error::Quadrature { rel_tol, max_refinements: spec.quad.max_refinements, lo: a, hi: b });
    }
    Ok(total)
}

fn negligible(seg: &[f64; 3], total: &[f64; 3], rel_tol: f64) -> bool {
    seg.iter().zip(total).all(|(s, t)| s.abs() <= rel_tol * t.abs())
}

fn add(total: &mut [f64; 3], seg: &[f64; 3]) {
    for (t, s) in total.iter_mut().zip(seg) {
        *t += s;
    }
}

/// `Int f_q(z) dz` over the real line by direct quadrature.
pub fn total_mass(spec: &DensitySpec) -> Result<f64> {
    let coarse = stats(spec)?;
    Ok(z_moments(spec, coarse.mean, coarse.variance.sqrt())?[0])
}

/// Moments by direct 2-D quadrature of the density (outer adaptive
/// quadrature over `z`, inner over `u`).
pub fn stats_by_quadrature(spec: &DensitySpec) -> Result<QuantileStats> {
    let coarse = stats(spec)?;
    let scale = coarse.variance.sqrt();
    let [mass, m1, m2] = z_moments(spec, coarse.mean, scale)?;
    let mean = coarse.mean + scale * m1;
    let variance = scale * scale * (m2 - m1 * m1);
    let true_quantile = spec.true_quantile();
    Ok(QuantileStats {
        mean,
        variance,
        bias: mean - true_quantile,
        true_quantile,
        normalization_defect: (mass - 1.0).abs(),
        outside_validated_region: spec.outside_validated_region,
    })
}

/// Abscissae `z_lo < z_hi` with `P(q_hat < z_lo) = P(q_hat > z_hi) = tail_prob`.
pub fn plot_range(spec: &DensitySpec, tail_prob: f64) -> Result<(f64, f64)> {
    let coarse = stats(spec)?;
    let s = coarse.variance.sqrt();
    let solve = |target: f64| -> Result<f64> {
        let (mut lo, mut hi) = (coarse.mean - s, coarse.mean + s);
        while cdf_of_estimator(spec, lo)? > target {
            lo -= 2.0 * (hi - lo);
        }
        while cdf_of_estimator(spec, hi)? < target {
            hi += 2.0 * (hi - lo);
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cdf_of_estimator(spec, mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-10 * s {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    Ok((solve(tail_prob)?, solve(1.0 - tail_prob)?))
}

/// Density on `points` equally spaced abscissae spanning [`plot_range`]
/// at tail probability `1e-7`.
pub fn density_grid(spec: &DensitySpec, points: usize) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(Error::InvalidParameter("density grid needs at least 2 points".into()));
    }
    let (lo, hi) = plot_range(spec, 1e-7)?;
    let kernel = Kernel::new(spec);
    (0..points)
        .into_par_iter()
        .map(|i| {
            let z = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            Ok((z, density_with(spec, &kernel, z, spec.quad.rel_tol)?))
        })
        .collect()
}

/// 20 log-spaced sample sizes from 50 to 1000, rounded to integers.
pub fn default_n_grid() -> Vec<u64> {
    log_spaced(50.0, 1000.0, 20)
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<u64> {
    if count == 1 {
        return vec![lo.round() as u64];
    }
    (0..count)
        .map(|k| (lo * (hi / lo).powf(k as f64 / (count - 1) as f64)).round() as u64)
        .collect()
}

/// Shape values 0, 0.1, ..., 0.5.
pub fn default_xi_grid() -> Vec<f64> {
    (0..=5).map(|k| k as f64 / 10.0).collect()
}

/// Shape values 0, 0.05, ..., 0.5 used for fitting the bias law.
pub fn regression_xi_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 20.0).collect()
}

/// Bias and variance over an `(n, xi)` grid, row-major by `n` then `xi`.
/// Cells are evaluated in parallel; each cell is independent, so the result
/// does not depend on the thread count.
pub fn bias_variance_surface(
    n_values: &[u64],
    xi_values: &[f64],
    alpha: ConfidenceLevel,
    sigma: f64,
) -> Result<BiasSurface> {
    surface_with(n_values, xi_values, alpha, sigma, false)
}

/// As [`bias_variance_surface`], optionally admitting cells outside the
/// validated region (flagged per row).
pub fn surface_with(
    n_values: &[u64],
    xi_values: &[f64],
    alpha: ConfidenceLevel,
    sigma: f64,
    region_override: bool,
) -> Result<BiasSurface> {
    let cells: Vec<(u64, f64)> = n_values
        .iter()
        .flat_map(|&n| xi_values.iter().map(move |&xi| (n, xi)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(n, xi)| {
            let spec = if region_override {
                DensitySpec::with_region_override(n, alpha, sigma, xi)
            } else {
                DensitySpec::new(n, alpha, sigma, xi)
            };
            let st = spec.and_then(|s| stats(&s)).map_err(|e| Error::GridCell { n, xi, source: Box::new(e) })?;
            Ok(SurfaceRow {
                n,
                xi,
                bias: st.bias,
                variance: st.variance,
                outside_validated_region: st.outside_validated_region,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasSurface { alpha, sigma, rows })
}
