//! Power-law model of the quantile-estimator bias and the bias-corrected
//! estimator `q_tilde = q_hat - B(n, xi_hat)`.

use std::f64::consts::LN_10;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::ConfidenceLevel;

/// `B(n, xi) = n^a1 * 10^(a2 xi + a3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasLawParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl BiasLawParams {
    /// Published regression constants for `alpha = 0.999`, `sigma = 1`.
    pub const PUBLISHED: Self = Self { a1: -1.00733, a2: 3.49572, a3: 1.49397 };
    /// The published constants rounded to `(-1, 3.5, 1.5)`.
    pub const ROUNDED: Self = Self { a1: -1.0, a2: 3.5, a3: 1.5 };
}

pub fn bias_law(params: &BiasLawParams, n: u64, xi: f64) -> f64 {
    (params.a1 * (n as f64).ln() + LN_10 * (params.a2 * xi + params.a3)).exp()
}

/// `10^((7 xi + 3) / 2) / n`. Calibrated for `alpha = 0.999`, `sigma = 1` only.
pub fn bias_practical(n: u64, xi: f64) -> f64 {
    bias_law(&BiasLawParams::ROUNDED, n, xi)
}

/// Which bias law to subtract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum BiasLaw {
    /// The rounded formula; valid for `alpha = 0.999`, `sigma = 1`.
    Practical,
    Fitted(BiasLawParams),
}

impl BiasLaw {
    pub fn bias(&self, n: u64, xi: f64) -> f64 {
        match self {
            BiasLaw::Practical => bias_practical(n, xi),
            BiasLaw::Fitted(p) => bias_law(p, n, xi),
        }
    }
}

/// `q_hat - B(n, xi_hat)`.
pub fn correct_quantile(q_hat: f64, n: u64, xi_hat: f64, law: &BiasLaw) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    Ok(q_hat - law.bias(n, xi_hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub n: u64,
    pub xi: f64,
    pub bias: f64,
    pub variance: f64,
    #[serde(default)]
    pub outside_validated_region: bool,
}

/// Bias and variance of the quantile estimator over an `(n, xi)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasSurface {
    pub alpha: ConfidenceLevel,
    pub sigma: f64,
    pub rows: Vec<SurfaceRow>,
}

fn distinct(mut v: Vec<f64>) -> usize {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn design(surface: &BiasSurface) -> (DMatrix<f64>, DVector<f64>) {
    let m = surface.rows.len();
    let x = DMatrix::from_fn(m, 3, |i, j| {
        let r = &surface.rows[i];
        match j {
            0 => (r.n as f64).ln(),
            1 => LN_10 * r.xi,
            _ => LN_10,
        }
    });
    let y = DVector::from_iterator(m, surface.rows.iter().map(|r| r.bias.ln()));
    (x, y)
}

/// Least-squares fit of `ln B = a1 ln n + ln10 (a2 xi + a3)`.
pub fn fit_bias_law(surface: &BiasSurface) -> Result<BiasLawParams> {
    if let Some(r) = surface.rows.iter().find(|r| !(r.bias > 0.0 && r.bias.is_finite())) {
        return Err(Error::DegenerateInput(format!(
            "bias must be positive to fit in log space, got {} at (n = {}, xi = {})",
            r.bias, r.n, r.xi
        )));
    }
    if surface.rows.len() < 3 {
        return Err(Error::RankDeficient(format!("{} rows for 3 coefficients", surface.rows.len())));
    }
    let (x, y) = design(surface);
    let svd = x.svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficient(format!(
            "singular values {smax:e} .. {smin:e}; the grid must vary both n and xi"
        )));
    }
    let n_levels = distinct(surface.rows.iter().map(|r| r.n as f64).collect());
    let xi_levels = distinct(surface.rows.iter().map(|r| r.xi).collect());
    if surface.rows.len() < 12 || n_levels < 3 || xi_levels < 3 {
        return Err(Error::DegenerateInput(format!(
            "need >= 12 rows over >= 3 sample sizes and >= 3 shapes, got {} rows, {n_levels} sizes, {xi_levels} shapes",
            surface.rows.len()
        )));
    }
    let beta = svd.solve(&y, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    Ok(BiasLawParams { a1: beta[0], a2: beta[1], a3: beta[2] })
}

/// `ln B - ln B_law` for every row.
pub fn log_residuals(params: &BiasLawParams, surface: &BiasSurface) -> Vec<f64> {
    surface
        .rows
        .iter()
        .map(|r| r.bias.ln() - bias_law(params, r.n, r.xi).ln())
        .collect()
}
