use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use tailgauge::density::{default_n_grid, default_xi_grid, density_grid, regression_xi_grid, surface_with};
use tailgauge::simulation::{histogram, histogram_range};
use tailgauge::{
    correct_quantile, density, fit_bias_law, parent_quantile_from_tail_quantile, run, BiasLaw, BiasLawParams,
    BiasSurface, ConfidenceLevel, DensitySpec, GpdParams, Sample, SimConfig, SimReport, TailFit,
};

use crate::config::{Command, LawChoice, RunConfig};
use crate::io::{emit, parse_surface, read_values, sig9, to_json, SURFACE_HEADER};
use crate::Invalid;

/// Rows a loss series needs before `fit` accepts it.
pub const MIN_FIT_ROWS: usize = 100;
/// Abscissae in the `density` table.
pub const DENSITY_POINTS: usize = 512;
/// Bins of the `simulate` histogram.
pub const HISTOGRAM_BINS: usize = 30;

pub fn execute(cfg: &RunConfig) -> Result<()> {
    match cfg.command {
        Command::Fit => cmd_fit(cfg),
        Command::Density => cmd_density(cfg),
        Command::BiasTable => cmd_bias_table(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Regress => cmd_regress(cfg),
        Command::Correct => cmd_correct(cfg),
    }
}

fn is_reference_alpha(alpha: ConfidenceLevel) -> bool {
    (alpha.value() - 0.999).abs() < 1e-12
}

/// Law fitted to a freshly computed unit-scale surface at `alpha`.
fn fresh_law(alpha: ConfidenceLevel) -> Result<BiasLawParams> {
    let surface = surface_with(&default_n_grid(), &regression_xi_grid(), alpha, 1.0, false)?;
    Ok(fit_bias_law(&surface)?)
}

fn region_warnings(n: u64, xi: f64, warnings: &mut Vec<&'static str>) {
    if n < 50 {
        warnings.push("n_below_validated_minimum");
    }
    if !(0.0..=0.5).contains(&xi) {
        warnings.push("xi_outside_validated_region");
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Serialize)]
pub struct FitReport {
    pub N: usize,
    pub alpha: f64,
    pub tail_fraction: f64,
    pub u_hat: f64,
    pub n_hat: usize,
    pub xi_hat: f64,
    pub sigma_hat: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub q_hat_alpha: f64,
    pub Q_hat_alpha: f64,
    /// Rounded law scaled by `sigma_hat`; calibrated for alpha = 0.999 only.
    pub bias_practical: f64,
    /// Law fitted at the requested alpha, scaled by `sigma_hat`; only when
    /// alpha differs from 0.999.
    pub bias_fitted: Option<f64>,
    pub bias_law_used: &'static str,
    pub q_tilde_alpha: f64,
    pub Q_tilde_alpha: f64,
    pub warnings: Vec<&'static str>,
}

pub fn fit_report(values: Vec<f64>, tail_fraction: f64, alpha: ConfidenceLevel) -> Result<FitReport> {
    if values.len() < MIN_FIT_ROWS {
        return Err(Invalid(format!("input has {} rows, need at least {MIN_FIT_ROWS}", values.len())).into());
    }
    let sample = Sample::new(values)?;
    let tf = TailFit::fit(&sample, tail_fraction).context("fitting the tail")?;
    let model = tf.model();
    let est = &tf.estimate;
    let n_hat = tf.selection.n_hat as u64;
    let q_hat = tf.tail_quantile(alpha);
    let big_q_hat = tf.parent_quantile(alpha)?;

    // The bias scales linearly with sigma.
    let bias_practical = est.sigma_hat * BiasLaw::Practical.bias(n_hat, est.xi_hat);
    let bias_fitted = if is_reference_alpha(alpha) {
        None
    } else {
        Some(est.sigma_hat * bias_with(&BiasLaw::Fitted(fresh_law(alpha)?), n_hat, est.xi_hat)?)
    };
    let (bias, bias_law_used) = match bias_fitted {
        Some(b) => (b, "fitted"),
        None => (bias_practical, "practical"),
    };
    let q_tilde = q_hat - bias;
    let big_q_tilde = parent_quantile_from_tail_quantile(&model, q_tilde, alpha)?;

    let mut warnings = Vec::new();
    region_warnings(n_hat, est.xi_hat, &mut warnings);
    if !est.converged {
        warnings.push("fit_not_converged");
    }
    Ok(FitReport {
        N: tf.n_total,
        alpha: alpha.value(),
        tail_fraction,
        u_hat: tf.selection.u_hat,
        n_hat: tf.selection.n_hat,
        xi_hat: est.xi_hat,
        sigma_hat: est.sigma_hat,
        log_likelihood: est.log_likelihood,
        converged: est.converged,
        q_hat_alpha: q_hat,
        Q_hat_alpha: big_q_hat,
        bias_practical,
        bias_fitted,
        bias_law_used,
        q_tilde_alpha: q_tilde,
        Q_tilde_alpha: big_q_tilde,
        warnings,
    })
}

fn bias_with(law: &BiasLaw, n: u64, xi: f64) -> Result<f64> {
    Ok(-correct_quantile(0.0, n, xi, law)?)
}

fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let path = cfg.input.as_deref().ok_or_else(|| Invalid("fit needs --input".into()))?;
    let mut values = read_values(path)?;
    if cfg.negate {
        values.iter_mut().for_each(|v| *v = -*v);
    }
    let report = fit_report(values, cfg.tail_fraction, cfg.alpha)?;
    emit(cfg.out.as_deref(), &to_json(&report)?)
}

fn density_spec(cfg: &RunConfig, n: u64, sigma: f64, xi: f64) -> Result<DensitySpec> {
    let spec = if cfg.override_region {
        DensitySpec::with_region_override(n, cfg.alpha, sigma, xi)?
    } else {
        DensitySpec::new(n, cfg.alpha, sigma, xi)
            .context("refusing to compute the density (--override-region forces it)")?
    };
    if spec.outside_validated_region() {
        eprintln!("{}", to_json(&serde_json::json!({ "warning": "outside_validated_region", "n": n, "xi": xi }))?.trim_end());
    }
    Ok(spec)
}

pub fn density_table(spec: &DensitySpec, points: usize) -> Result<String> {
    let mut out = String::from("z,f_q\n");
    for (z, f) in density_grid(spec, points)? {
        out.push_str(&format!("{},{}\n", sig9(z), sig9(f)));
    }
    Ok(out)
}

fn cmd_density(cfg: &RunConfig) -> Result<()> {
    let n = cfg.require(cfg.n, "--n")?;
    let xi = cfg.require(cfg.xi, "--xi")?;
    let spec = density_spec(cfg, n, cfg.sigma.unwrap_or(1.0), xi)?;
    emit(cfg.out.as_deref(), &density_table(&spec, DENSITY_POINTS)?)
}

fn surface(cfg: &RunConfig, default_xi: fn() -> Vec<f64>) -> Result<BiasSurface> {
    let n_values = cfg.grid_n.clone().unwrap_or_else(default_n_grid);
    let xi_values = cfg.grid_xi.clone().unwrap_or_else(default_xi);
    if n_values.is_empty() || xi_values.is_empty() {
        return Err(Invalid("grids must not be empty".into()).into());
    }
    let sigma = cfg.sigma.unwrap_or(1.0);
    let s = surface_with(&n_values, &xi_values, cfg.alpha, sigma, cfg.override_region).context(
        "computing the bias surface (--override-region admits cells outside the validated region)",
    )?;
    if s.rows.iter().any(|r| r.outside_validated_region) {
        eprintln!("{}", to_json(&serde_json::json!({ "warning": "outside_validated_region" }))?.trim_end());
    }
    Ok(s)
}

pub fn surface_table(s: &BiasSurface) -> String {
    let mut out = format!("{SURFACE_HEADER}\n");
    for r in &s.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            sig9(r.xi),
            sig9(s.alpha.value()),
            sig9(s.sigma),
            sig9(r.bias),
            sig9(r.variance)
        ));
    }
    out
}

fn cmd_bias_table(cfg: &RunConfig) -> Result<()> {
    emit(cfg.out.as_deref(), &surface_table(&surface(cfg, default_xi_grid)?))
}

#[derive(Debug, Serialize)]
struct SimOutput<'a> {
    #[serde(flatten)]
    report: &'a SimReport,
    histogram_path: Option<PathBuf>,
}

pub fn histogram_table(report: &SimReport, spec: &DensitySpec) -> Result<String> {
    let mut out = String::from("bin_lo,bin_hi,count,density,f_q\n");
    let Some((lo, hi)) = histogram_range(&report.q_hat_samples) else {
        return Ok(out);
    };
    for b in histogram(&report.q_hat_samples, HISTOGRAM_BINS, lo, hi)? {
        let f = density(spec, 0.5 * (b.lo + b.hi))?;
        out.push_str(&format!("{},{},{},{},{}\n", sig9(b.lo), sig9(b.hi), b.count, sig9(b.density), sig9(f)));
    }
    Ok(out)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let n = cfg.n.unwrap_or(100);
    let params = GpdParams::new(cfg.sigma.unwrap_or(1.0), cfg.xi.unwrap_or(0.25))?;
    let sim = SimConfig {
        n: usize::try_from(n).map_err(|_| Invalid(format!("--n {n} too large")))?,
        replications: cfg.replications.unwrap_or(10_000),
        params,
        alpha: cfg.alpha,
        seed: cfg.seed.unwrap_or(0),
    };
    let report = run(&sim)?;
    let histogram_path = cfg.histogram.clone().or_else(|| {
        cfg.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".histogram.csv");
            PathBuf::from(s)
        })
    });
    if let Some(path) = &histogram_path {
        let spec = DensitySpec::with_region_override(n, cfg.alpha, params.sigma(), params.xi())?;
        emit(Some(path), &histogram_table(&report, &spec)?)?;
    }
    emit(cfg.out.as_deref(), &to_json(&SimOutput { report: &report, histogram_path })?)
}

fn cmd_regress(cfg: &RunConfig) -> Result<()> {
    let s = match &cfg.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let (rows, alpha, sigma) = parse_surface(&text).with_context(|| format!("parsing {}", path.display()))?;
            let alpha = ConfidenceLevel::new(alpha).map_err(|e| Invalid(e.to_string()))?;
            BiasSurface { alpha, sigma, rows }
        }
        None => surface(cfg, regression_xi_grid)?,
    };
    emit(cfg.out.as_deref(), &to_json(&fit_bias_law(&s)?)?)
}

#[derive(Debug, Serialize)]
pub struct CorrectionReport {
    pub q_hat: f64,
    pub n: u64,
    pub xi_hat: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub law: &'static str,
    pub bias_law: BiasLawParams,
    pub bias: f64,
    pub q_tilde: f64,
    pub warnings: Vec<&'static str>,
}

pub fn correction(
    q_hat: f64,
    n: u64,
    xi_hat: f64,
    sigma: f64,
    alpha: ConfidenceLevel,
    choice: LawChoice,
) -> Result<CorrectionReport> {
    if !(sigma > 0.0) {
        return Err(Invalid(format!("--sigma must be positive, got {sigma}")).into());
    }
    let mut warnings = Vec::new();
    let choice = match choice {
        LawChoice::Auto if is_reference_alpha(alpha) => LawChoice::Practical,
        LawChoice::Auto => LawChoice::Fitted,
        c => c,
    };
    let (name, params) = match choice {
        LawChoice::Practical => ("practical", BiasLawParams::ROUNDED),
        LawChoice::Published => ("published", BiasLawParams::PUBLISHED),
        _ => ("fitted", fresh_law(alpha)?),
    };
    if name != "fitted" && !is_reference_alpha(alpha) {
        warnings.push("law_calibrated_for_alpha_0.999_only");
    }
    region_warnings(n, xi_hat, &mut warnings);
    let law = if name == "practical" { BiasLaw::Practical } else { BiasLaw::Fitted(params) };
    let bias = sigma * bias_with(&law, n, xi_hat)?;
    let q_tilde = if sigma == 1.0 { correct_quantile(q_hat, n, xi_hat, &law)? } else { q_hat - bias };
    Ok(CorrectionReport { q_hat, n, xi_hat, alpha: alpha.value(), sigma, law: name, bias_law: params, bias, q_tilde, warnings })
}

fn cmd_correct(cfg: &RunConfig) -> Result<()> {
    let q_hat = cfg.require(cfg.q_hat, "--q-hat")?;
    let n = cfg.require(cfg.n, "--n")?;
    let xi = cfg.require(cfg.xi, "--xi")?;
    let report = correction(q_hat, n, xi, cfg.sigma.unwrap_or(1.0), cfg.alpha, cfg.law)?;
    emit(cfg.out.as_deref(), &to_json(&report)?)
}
