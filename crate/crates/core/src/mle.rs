//! Maximum-likelihood fitting of the GPD to exceedances, and the asymptotic
//! normal law of the estimators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gpd::{ln1p_ratio, pdf, GpdParams};
use crate::optim::{brent, NelderMead};

/// Lower edge of the shape search box (asymptotics need `xi > -0.5`).
pub const XI_MIN: f64 = -0.5 + 0.01;
/// Upper edge of the shape search box.
pub const XI_MAX: f64 = 5.0;

const PROFILE_POINTS: usize = 41;
const PROFILE_XI_HI: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleEstimate {
    pub xi_hat: f64,
    pub sigma_hat: f64,
    pub log_likelihood: f64,
    pub n: usize,
    pub converged: bool,
}

impl MleEstimate {
    pub fn params(&self) -> GpdParams {
        GpdParams::new(self.sigma_hat, self.xi_hat).expect("fit produces a positive scale")
    }
}

/// Limiting normal law of `(xi_hat, sigma_hat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticCovariance {
    pub mean_vector: [f64; 2],
    pub cov_matrix: [[f64; 2]; 2],
    pub n: u64,
}

impl AsymptoticCovariance {
    /// `n C`, the covariance of `sqrt(n) (xi_hat - xi, sigma_hat - sigma)`.
    pub fn renormalized(&self) -> [[f64; 2]; 2] {
        let n = self.n as f64;
        let c = &self.cov_matrix;
        [[n * c[0][0], n * c[0][1]], [n * c[1][0], n * c[1][1]]]
    }

    pub fn determinant(&self) -> f64 {
        let c = &self.cov_matrix;
        c[0][0] * c[1][1] - c[0][1] * c[1][0]
    }

    /// Lower Cholesky factor `L` with `L L' = C`.
    pub fn cholesky(&self) -> [[f64; 2]; 2] {
        let c = &self.cov_matrix;
        let l11 = c[0][0].sqrt();
        let l21 = c[1][0] / l11;
        let l22 = (c[1][1] - l21 * l21).sqrt();
        [[l11, 0.0], [l21, l22]]
    }

    /// Mean and variance of `sigma_hat` given `xi_hat = u`.
    pub fn conditional_scale(&self, u: f64) -> (f64, f64) {
        let c = &self.cov_matrix;
        let slope = c[0][1] / c[0][0];
        let mean = self.mean_vector[1] + slope * (u - self.mean_vector[0]);
        (mean, c[1][1] - slope * c[0][1])
    }
}

/// `C = ((1 + xi) / n) [[1 + xi, -sigma], [-sigma, 2 sigma^2]]`.
pub fn asymptotic_covariance(p: &GpdParams, n: u64) -> Result<AsymptoticCovariance> {
    let (xi, sigma) = (p.xi(), p.sigma());
    if xi <= -0.5 {
        return Err(Error::Domain(format!(
            "asymptotic normality of the MLE needs xi > -0.5, got {xi}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    let k = (1.0 + xi) / n as f64;
    Ok(AsymptoticCovariance {
        mean_vector: [xi, sigma],
        cov_matrix: [
            [k * (1.0 + xi), -k * sigma],
            [-k * sigma, k * 2.0 * sigma * sigma],
        ],
        n,
    })
}

/// Sum of log densities; `-inf` when any point lies outside the support.
pub fn log_likelihood(p: &GpdParams, data: &[f64]) -> f64 {
    let (sigma, xi) = (p.sigma(), p.xi());
    let mut sum = 0.0;
    for &x in data {
        if !(x >= 0.0) {
            return f64::NEG_INFINITY;
        }
        let h = ln1p_ratio(xi, x / sigma);
        if h.is_finite() {
            sum -= (1.0 + xi) * h;
        } else {
            // Exactly at (or beyond) the finite upper end of the support.
            let d = pdf(p, x);
            if d == 0.0 {
                return f64::NEG_INFINITY;
            }
            sum += (d * sigma).ln();
        }
    }
    sum - data.len() as f64 * sigma.ln()
}

fn validate(data: &[f64]) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least 2 observations, got {}",
            data.len()
        )));
    }
    if let Some(bad) = data.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::DegenerateInput(format!(
            "observations must be finite and >= 0, found {bad}"
        )));
    }
    if data.iter().all(|&x| x == data[0]) {
        return Err(Error::DegenerateInput("all observations are identical".into()));
    }
    Ok(())
}

/// Maximum-likelihood estimate of `(xi, sigma)`.
///
/// The data are rescaled to unit mean, the likelihood is profiled over a
/// 41-point shape grid (scale maximized by 1-D search at each point), and the
/// best grid point is polished by a Nelder–Mead simplex in `(xi, ln sigma)`.
pub fn fit(data: &[f64]) -> Result<MleEstimate> {
    validate(data)?;
    let scale = data.iter().sum::<f64>() / data.len() as f64;
    let y: Vec<f64> = data.iter().map(|x| x / scale).collect();
    let y_max = y.iter().cloned().fold(0.0, f64::max);

    let nll = |xi: f64, log_sigma: f64| -> f64 {
        if !(XI_MIN..=XI_MAX).contains(&xi) || !log_sigma.is_finite() {
            return f64::INFINITY;
        }
        let sigma = log_sigma.exp();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return f64::INFINITY;
        }
        let p = GpdParams::new(sigma, xi).expect("positive finite scale");
        let ll = log_likelihood(&p, &y);
        if ll.is_nan() {
            f64::INFINITY
        } else {
            -ll
        }
    };

    // Profile over the shape grid.
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for k in 0..PROFILE_POINTS {
        let xi = XI_MIN + (PROFILE_XI_HI - XI_MIN) * k as f64 / (PROFILE_POINTS - 1) as f64;
        let lo = if xi < 0.0 { (-xi * y_max).ln() + 1e-9 } else { -25.0 };
        let hi = y_max.ln() + 10.0;
        let m = brent(|ls| nll(xi, ls), lo, hi, 1e-8, 200);
        if m.f < best.0 {
            best = (m.f, xi, m.x[0]);
        }
    }

    let nm = NelderMead::default();
    let first = nm.minimize(|x: &[f64; 2]| nll(x[0], x[1]), [best.1, best.2], [0.05, 0.1]);
    // Restart from the best vertex and run until the simplex collapses.
    let tight = NelderMead { f_tol: 0.0, x_tol: 1e-10, ..nm };
    let second = tight.minimize(|x: &[f64; 2]| nll(x[0], x[1]), first.x, [0.01, 0.01]);
    let polished = if second.f <= first.f { second } else { first };

    let xi_hat = polished.x[0];
    let sigma_hat = polished.x[1].exp() * scale;
    let params = GpdParams::new(sigma_hat, xi_hat)
        .map_err(|_| Error::DegenerateInput("likelihood has no finite maximum".into()))?;
    Ok(MleEstimate {
        xi_hat,
        sigma_hat,
        log_likelihood: log_likelihood(&params, data),
        n: data.len(),
        converged: first.converged && second.converged && polished.f.is_finite(),
    })
}
