//! The two-parameter generalized Pareto distribution.
//!
//! `F(x) = 1 - (1 + xi x / sigma)^(-1/xi)` on `[0, inf)` for `xi >= 0` and on
//! `[0, -sigma/xi]` for `xi < 0`. All evaluations switch to the exponential
//! limit when `|xi| < XI_ZERO_TOL` and to a short series when the product of
//! `xi` with the relevant argument is tiny, so the formulas stay continuous
//! through `xi = 0`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Below this `|xi|` the exponential-limit formulas are used.
pub const XI_ZERO_TOL: f64 = 1e-8;
/// Upper edge of the band in which second-order series replace the closed forms.
pub const XI_SERIES_BAND: f64 = 1e-4;

/// Scale and shape of a generalized Pareto distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpdParams {
    sigma: f64,
    xi: f64,
}

impl GpdParams {
    pub fn new(sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and > 0, got {sigma}"
            )));
        }
        if !xi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "xi must be finite, got {xi}"
            )));
        }
        Ok(Self { sigma, xi })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Right end of the support, `None` when unbounded.
    pub fn upper_support(&self) -> Option<f64> {
        (self.xi < 0.0).then(|| -self.sigma / self.xi)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        cdf(self, x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        pdf(self, x)
    }

    pub fn quantile(&self, level: ConfidenceLevel) -> f64 {
        quantile(self, level)
    }
}

/// Probability level `alpha` strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidParameter(format!(
                "confidence level must lie in (0, 1), got {alpha}"
            )))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// `-ln(1 - alpha)`, always positive.
    pub fn tail_log(&self) -> f64 {
        -(-self.0).ln_1p()
    }
}

/// `(exp(k l) - 1) / k`, continuous through `k = 0` where it equals `l`.
pub(crate) fn expm1_ratio(k: f64, l: f64) -> f64 {
    if k.abs() < XI_ZERO_TOL {
        l
    } else if (k * l).abs() < XI_SERIES_BAND {
        let kl = k * l;
        l * (1.0 + kl / 2.0 + kl * kl / 6.0)
    } else {
        (k * l).exp_m1() / k
    }
}

/// `ln(1 + k y) / k`, continuous through `k = 0` where it equals `y`.
/// Returns `+inf` when `1 + k y <= 0`.
pub(crate) fn ln1p_ratio(k: f64, y: f64) -> f64 {
    if k.abs() < XI_ZERO_TOL {
        y
    } else if (k * y).abs() < XI_SERIES_BAND {
        let ky = k * y;
        y * (1.0 - ky / 2.0 + ky * ky / 3.0)
    } else {
        let arg = k * y;
        if arg <= -1.0 {
            // Support edge for k < 0: ln(0) / k with k < 0.
            f64::INFINITY
        } else {
            arg.ln_1p() / k
        }
    }
}

pub fn cdf(p: &GpdParams, x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if let Some(upper) = p.upper_support() {
        if x >= upper {
            return 1.0;
        }
    }
    let h = ln1p_ratio(p.xi, x / p.sigma);
    -(-h).exp_m1()
}

pub fn pdf(p: &GpdParams, x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 0.0;
    }
    if let Some(upper) = p.upper_support() {
        if x > upper {
            return 0.0;
        }
        if x == upper {
            // Base of the power is zero here; the exponent sign decides.
            let k = -(1.0 + p.xi) / p.xi;
            return if k > 0.0 {
                0.0
            } else if k == 0.0 {
                1.0 / p.sigma
            } else {
                f64::INFINITY
            };
        }
    }
    let h = ln1p_ratio(p.xi, x / p.sigma);
    (-(1.0 + p.xi) * h).exp() / p.sigma
}

pub fn quantile(p: &GpdParams, level: ConfidenceLevel) -> f64 {
    quantile_at(p, level.value())
}

/// Quantile at a raw probability; `prob` must lie in `[0, 1)`.
pub(crate) fn quantile_at(p: &GpdParams, prob: f64) -> f64 {
    let l = -(-prob).ln_1p();
    p.sigma * expm1_ratio(p.xi, l)
}

/// `sigma / (1 - xi)`, defined only for `xi < 1`.
pub fn mean(p: &GpdParams) -> Option<f64> {
    (p.xi < 1.0).then(|| p.sigma / (1.0 - p.xi))
}

/// `sigma^2 / ((1 - xi)^2 (1 - 2 xi))`, defined only for `xi < 0.5`.
pub fn variance(p: &GpdParams) -> Option<f64> {
    (p.xi < 0.5).then(|| {
        let a = 1.0 - p.xi;
        p.sigma * p.sigma / (a * a * (1.0 - 2.0 * p.xi))
    })
}

/// Uniform draw on the open interval `(0, 1)`.
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `count` iid draws by inverse transform.
pub fn sample<R: Rng + ?Sized>(p: &GpdParams, rng: &mut R, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    Ok((0..count).map(|_| quantile_at(p, open_unit(rng))).collect())
}
