//! Monte Carlo replication of the estimation experiment: draw `n` GPD
//! values, fit by maximum likelihood, and record the plug-in quantile.
//!
//! Replication `i` uses its own ChaCha8 stream `i` under the configured
//! seed, so results are identical however the replications are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{cdf_of_estimator, DensitySpec};
use crate::error::{Error, Result};
use crate::gpd::{quantile, sample, ConfidenceLevel, GpdParams};
use crate::mle::{asymptotic_covariance, fit, MleEstimate};

/// Replications needed before summary statistics are reported.
pub const MIN_REPLICATIONS: usize = 100;
/// Largest tolerated share of failed fits.
pub const MAX_FAILED_SHARE: f64 = 0.10;
/// Level of the goodness-of-fit test reported alongside each run.
pub const GOF_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n: usize,
    pub replications: usize,
    pub params: GpdParams,
    pub alpha: ConfidenceLevel,
    pub seed: u64,
}

impl SimConfig {
    fn validate(&self, min_replications: usize) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("sample size must be >= 2, got {}", self.n)));
        }
        if self.replications < min_replications {
            return Err(Error::InvalidParameter(format!(
                "need at least {min_replications} replications, got {}",
                self.replications
            )));
        }
        Ok(())
    }
}

/// Independent random stream for one replication.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One fitted replication per index; `None` where the fit failed or stalled.
pub fn replicate(config: &SimConfig) -> Vec<Option<MleEstimate>> {
    (0..config.replications as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(config.seed, i);
            let xs = sample(&config.params, &mut rng, config.n).ok()?;
            fit(&xs).ok().filter(|m| m.converged)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub n: usize,
    pub replications: usize,
    pub sigma: f64,
    pub xi: f64,
    pub alpha: f64,
    pub seed: u64,
    pub true_quantile: f64,
    pub q_hat_samples: Vec<f64>,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    pub empirical_bias: f64,
    /// Standard error of `empirical_mean`.
    pub mc_standard_error: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    /// Test family and level used for the goodness-of-fit verdict.
    pub gof_test: String,
    pub gof_rejected: bool,
    pub failed_fits: usize,
    /// The theoretical distribution is used outside `n >= 50`, `0 <= xi <= 0.5`.
    pub theory_outside_validated_region: bool,
}

/// Run the replications and compare the plug-in quantiles with the
/// finite-sample distribution.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    config.validate(MIN_REPLICATIONS)?;
    let fits = replicate(config);
    let failed_fits = fits.iter().filter(|f| f.is_none()).count();
    check_failures(failed_fits, config.replications)?;

    let q_hat_samples: Vec<f64> = fits.iter().flatten().map(|m| quantile(&m.params(), config.alpha)).collect();
    let k = q_hat_samples.len() as f64;
    let empirical_mean = q_hat_samples.iter().sum::<f64>() / k;
    let empirical_variance =
        q_hat_samples.iter().map(|q| (q - empirical_mean).powi(2)).sum::<f64>() / (k - 1.0);
    let true_quantile = quantile(&config.params, config.alpha);

    let spec = DensitySpec::with_region_override(
        config.n as u64,
        config.alpha,
        config.params.sigma(),
        config.params.xi(),
    )?;
    let ks = ks_test_fallible(&q_hat_samples, |q| cdf_of_estimator(&spec, q))?;

    Ok(SimReport {
        n: config.n,
        replications: config.replications,
        sigma: config.params.sigma(),
        xi: config.params.xi(),
        alpha: config.alpha.value(),
        seed: config.seed,
        true_quantile,
        empirical_mean,
        empirical_variance,
        empirical_bias: empirical_mean - true_quantile,
        mc_standard_error: (empirical_variance / k).sqrt(),
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
        gof_test: format!("one-sample Kolmogorov-Smirnov, asymptotic, level {GOF_LEVEL}"),
        gof_rejected: ks.p_value < GOF_LEVEL,
        failed_fits,
        theory_outside_validated_region: spec.outside_validated_region(),
        q_hat_samples,
    })
}

fn check_failures(failed: usize, replications: usize) -> Result<()> {
    if failed as f64 > MAX_FAILED_SHARE * replications as f64 {
        Err(Error::DegenerateSimulation { failed, replications })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided one-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test<F: FnMut(f64) -> f64>(samples: &[f64], mut cdf: F) -> Result<KsResult> {
    ks_test_fallible(samples, |x| Ok(cdf(x)))
}

fn ks_test_fallible<F: FnMut(f64) -> Result<f64>>(samples: &[f64], mut cdf: F) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("KS test needs at least one sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x)?;
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival(n.sqrt() * d) })
}

/// `P(K > lambda)` for the limiting Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    const TERM_TOL: f64 = 1e-12;
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi-transformed series, fast for small lambda.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1.. {
            let m = (2 * k - 1) as f64;
            let term = (c * m * m).exp();
            sum += term;
            if term < TERM_TOL {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        for k in 1.. {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < TERM_TOL {
                break;
            }
        }
        2.0 * sum
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `count / (total samples * width)`; comparable with a density.
    pub density: f64,
}

/// Equal-width histogram over `[lo, hi]`, normalized by the total number of
/// samples (including those outside the range).
pub fn histogram(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<HistogramBin>> {
    if bins == 0 || !(hi > lo) || samples.is_empty() {
        return Err(Error::InvalidParameter("histogram needs bins >= 1, hi > lo and samples".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        if x >= lo && x <= hi {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let total = samples.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lo: lo + k as f64 * width,
            hi: lo + (k + 1) as f64 * width,
            count,
            density: count as f64 / (total * width),
        })
        .collect())
}

/// Default histogram window: smallest sample to the empirical 99th percentile.
pub fn histogram_range(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.len() < 2 {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let hi = s[((s.len() - 1) as f64 * 0.99).round() as usize];
    (hi > s[0]).then_some((s[0], hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleAsymptotics {
    pub empirical_cov: [[f64; 2]; 2],
    pub theoretical_cov: [[f64; 2]; 2],
    pub max_rel_err: f64,
    pub failed_fits: usize,
}

/// Empirical covariance of `(xi_hat, sigma_hat)` across replications against
/// the asymptotic covariance at the same `n`.
pub fn check_mle_asymptotics(config: &SimConfig) -> Result<MleAsymptotics> {
    config.validate(1000)?;
    let theory = asymptotic_covariance(&config.params, config.n as u64)?;
    let fits = replicate(config);
    let failed_fits = fits.iter().filter(|f| f.is_none()).count();
    check_failures(failed_fits, config.replications)?;
    let pts: Vec<[f64; 2]> = fits.iter().flatten().map(|m| [m.xi_hat, m.sigma_hat]).collect();
    let k = pts.len() as f64;
    let mean = [pts.iter().map(|p| p[0]).sum::<f64>() / k, pts.iter().map(|p| p[1]).sum::<f64>() / k];
    let mut cov = [[0.0; 2]; 2];
    for p in &pts {
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (k - 1.0);
            }
        }
    }
    let mut max_rel_err: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let t = theory.cov_matrix[i][j];
            max_rel_err = max_rel_err.max(((cov[i][j] - t) / t).abs());
        }
    }
    Ok(MleAsymptotics { empirical_cov: cov, theoretical_cov: theory.cov_matrix, max_rel_err, failed_fits })
}
