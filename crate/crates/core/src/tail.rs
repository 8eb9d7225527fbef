//! From a raw loss sample to a fitted tail model and parent-distribution
//! quantiles.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gpd::{expm1_ratio, quantile, ConfidenceLevel, GpdParams};
use crate::mle::{fit, MleEstimate};

pub const TAIL_FRACTION_DEFAULT: f64 = 0.10;
pub const TAIL_FRACTION_MIN: f64 = 0.02;
pub const TAIL_FRACTION_MAX: f64 = 0.5;
/// Fewest exceedances a tail fit accepts.
pub const MIN_EXCEEDANCES: usize = 10;

/// A loss sample of at least [`MIN_EXCEEDANCES`] finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_EXCEEDANCES {
            return Err(Error::DegenerateInput(format!(
                "sample needs at least {MIN_EXCEEDANCES} values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!("non-finite sample value {bad}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flip signs, turning a lower-tail (return) series into losses.
    pub fn negated(&self) -> Self {
        Self { values: self.values.iter().map(|v| -v).collect() }
    }
}

/// Threshold, exceedance count and exceedances of one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSelection {
    pub u_hat: f64,
    pub n_hat: usize,
    /// Values minus threshold, largest first; all strictly positive.
    pub exceedances: Vec<f64>,
}

/// Select the upper `fraction` of the sample as the tail.
///
/// `n_hat = floor(fraction N)` and the threshold is the `(n_hat + 1)`-th
/// largest value. Values tied with the threshold are dropped from the tail,
/// so `n_hat` can end up smaller than requested.
pub fn select_tail(s: &Sample, fraction: f64) -> Result<TailSelection> {
    if !(TAIL_FRACTION_MIN..=TAIL_FRACTION_MAX).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "tail fraction must lie in [{TAIL_FRACTION_MIN}, {TAIL_FRACTION_MAX}], got {fraction}"
        )));
    }
    let big_n = s.len();
    let requested = (fraction * big_n as f64).floor() as usize;
    if requested < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances { found: requested, required: MIN_EXCEEDANCES });
    }
    let mut sorted = s.values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let u_hat = sorted[requested];
    let exceedances: Vec<f64> = sorted[..requested]
        .iter()
        .take_while(|&&x| x > u_hat)
        .map(|x| x - u_hat)
        .collect();
    if exceedances.len() < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances { found: exceedances.len(), required: MIN_EXCEEDANCES });
    }
    Ok(TailSelection { u_hat, n_hat: exceedances.len(), exceedances })
}

/// The quantities the parent-quantile estimators need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailModel {
    pub u_hat: f64,
    pub n_hat: usize,
    pub n_total: usize,
    pub params: GpdParams,
}

impl TailModel {
    /// `(N / n_hat)(1 - alpha)`; must be below 1 for the quantile to lie in the tail.
    pub fn tail_ratio(&self, level: ConfidenceLevel) -> f64 {
        self.n_total as f64 / self.n_hat as f64 * (1.0 - level.value())
    }

    fn check(&self, level: ConfidenceLevel) -> Result<f64> {
        if self.n_hat == 0 || self.n_total < self.n_hat {
            return Err(Error::InvalidParameter(format!(
                "need 0 < n_hat <= N, got n_hat = {}, N = {}",
                self.n_hat, self.n_total
            )));
        }
        let ratio = self.tail_ratio(level);
        if ratio >= 1.0 {
            return Err(Error::QuantileNotInTail { ratio });
        }
        Ok(ratio)
    }
}

/// A GPD fitted to the tail of one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub selection: TailSelection,
    pub estimate: MleEstimate,
    pub n_total: usize,
}

impl TailFit {
    pub fn fit(s: &Sample, fraction: f64) -> Result<Self> {
        let selection = select_tail(s, fraction)?;
        let estimate = fit(&selection.exceedances)?;
        Ok(Self { selection, estimate, n_total: s.len() })
    }

    pub fn model(&self) -> TailModel {
        TailModel {
            u_hat: self.selection.u_hat,
            n_hat: self.selection.n_hat,
            n_total: self.n_total,
            params: self.estimate.params(),
        }
    }

    /// Quantile of the fitted exceedance distribution, `q_hat`.
    pub fn tail_quantile(&self, level: ConfidenceLevel) -> f64 {
        quantile(&self.estimate.params(), level)
    }

    pub fn parent_quantile(&self, level: ConfidenceLevel) -> Result<f64> {
        estimate_parent_quantile(&self.model(), level)
    }
}

/// `Q_hat = u + (sigma/xi) [((N/n)(1 - alpha))^(-xi) - 1]`.
pub fn estimate_parent_quantile(m: &TailModel, level: ConfidenceLevel) -> Result<f64> {
    let ratio = m.check(level)?;
    Ok(m.u_hat + m.params.sigma() * expm1_ratio(m.params.xi(), -ratio.ln()))
}

/// Parent quantile from a given exceedance quantile `q_hat`:
/// `u + (sigma/xi) [(n/N)^xi - 1] + (n/N)^xi q_hat`.
pub fn parent_quantile_from_tail_quantile(m: &TailModel, q_hat: f64, level: ConfidenceLevel) -> Result<f64> {
    m.check(level)?;
    let log_frac = (m.n_hat as f64 / m.n_total as f64).ln();
    let xi = m.params.xi();
    Ok(m.u_hat + m.params.sigma() * expm1_ratio(xi, log_frac) + (xi * log_frac).exp() * q_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(u: f64, n_hat: usize, n_total: usize, sigma: f64, xi: f64) -> TailModel {
        TailModel { u_hat: u, n_hat, n_total, params: GpdParams::new(sigma, xi).unwrap() }
    }

    #[test]
    fn select_tail_on_integers() {
        let s = Sample::new((1..=100).map(f64::from).collect()).unwrap();
        let t = select_tail(&s, 0.10).unwrap();
        assert_eq!(t.n_hat, 10);
        assert_eq!(t.u_hat, 90.0);
        assert_eq!(t.exceedances, (1..=10).rev().map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn select_tail_fraction_rule() {
        let s = Sample::new((0..1000).map(|i| (i as f64 * 0.37).sin() + i as f64).collect()).unwrap();
        assert_eq!(select_tail(&s, 0.15).unwrap().n_hat, 150);
    }

    #[test]
    fn select_tail_ties_at_threshold() {
        // Eleven values tied at the maximum: nothing lies strictly above the threshold.
        let mut v: Vec<f64> = (0..89).map(f64::from).collect();
        v.extend(std::iter::repeat(500.0).take(11));
        let s = Sample::new(v).unwrap();
        assert!(matches!(select_tail(&s, 0.10), Err(Error::TooFewExceedances { found: 0, .. })));

        // The 20th largest value ties with the threshold and is dropped.
        let mut v: Vec<f64> = (0..200).map(f64::from).collect();
        v[180] = 179.0;
        let s = Sample::new(v).unwrap();
        let t = select_tail(&s, 0.10).unwrap();
        assert_eq!(t.u_hat, 179.0);
        assert_eq!(t.n_hat, 19);
        assert!(t.exceedances.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn select_tail_errors() {
        let s = Sample::new((0..50).map(f64::from).collect()).unwrap();
        assert!(matches!(select_tail(&s, 0.10), Err(Error::TooFewExceedances { found: 5, .. })));
        assert!(select_tail(&s, 0.9).is_err());
        assert!(Sample::new(vec![1.0; 5]).is_err());
        assert!(Sample::new(vec![f64::NAN; 20]).is_err());
    }

    #[test]
    fn select_tail_is_permutation_invariant() {
        let v: Vec<f64> = (0..300).map(|i| ((i * 7919) % 300) as f64 * 1.5).collect();
        let mut w = v.clone();
        w.reverse();
        w.rotate_left(17);
        let a = select_tail(&Sample::new(v).unwrap(), 0.1).unwrap();
        let b = select_tail(&Sample::new(w).unwrap(), 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parent_quantile_examples() {
        let a = ConfidenceLevel::new(0.999).unwrap();
        let m = model(5.0, 100, 1000, 1.0, 0.25);
        let expect = 5.0 + (0.01f64.powf(-0.25) - 1.0) / 0.25;
        assert_relative_eq!(estimate_parent_quantile(&m, a).unwrap(), expect, max_relative = 1e-14);
        assert!((expect - 13.64911).abs() < 1e-5);

        let m0 = model(5.0, 100, 1000, 1.0, 0.0);
        assert_relative_eq!(estimate_parent_quantile(&m0, a).unwrap(), 5.0 - 0.01f64.ln(), max_relative = 1e-14);
        assert!((estimate_parent_quantile(&m0, a).unwrap() - 9.60517).abs() < 1e-5);

        let whole = model(0.0, 500, 500, 1.7, 0.3);
        let p = GpdParams::new(1.7, 0.3).unwrap();
        assert_relative_eq!(estimate_parent_quantile(&whole, a).unwrap(), quantile(&p, a), max_relative = 1e-14);
    }

    #[test]
    fn tail_quantile_route_examples() {
        let a = ConfidenceLevel::new(0.999).unwrap();
        let m = model(5.0, 100, 1000, 1.0, 0.25);
        let q = quantile(&m.params, a);
        assert!((q - 18.49365).abs() < 1e-5);
        let got = parent_quantile_from_tail_quantile(&m, q, a).unwrap();
        assert!((got - 13.64911).abs() < 1e-5);
        assert!((got - estimate_parent_quantile(&m, a).unwrap()).abs() < 1e-10);

        let collapse = model(0.0, 200, 200, 1.0, 0.4);
        assert_eq!(parent_quantile_from_tail_quantile(&collapse, 0.0, a).unwrap(), 0.0);
    }

    #[test]
    fn quantile_outside_tail_is_rejected() {
        let a = ConfidenceLevel::new(0.85).unwrap();
        let m = model(5.0, 100, 1000, 1.0, 0.25);
        assert!(matches!(estimate_parent_quantile(&m, a), Err(Error::QuantileNotInTail { .. })));
        assert!(matches!(parent_quantile_from_tail_quantile(&m, 3.0, a), Err(Error::QuantileNotInTail { .. })));
    }

    #[test]
    fn parent_quantile_increases_with_level() {
        let m = model(2.0, 80, 1000, 0.7, 0.15);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..200 {
            let a = ConfidenceLevel::new(0.921 + 0.0789 * i as f64 / 200.0).unwrap();
            let q = estimate_parent_quantile(&m, a).unwrap();
            assert!(q > prev);
            prev = q;
        }
    }
}
