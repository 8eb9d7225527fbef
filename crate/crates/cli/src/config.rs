//! Command-line flags, environment and config file, merged into one
//! [`RunConfig`]. A flag beats its `TAILGAUGE_*` variable, which beats the
//! `key = value` file given by `--config`.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tailgauge::tail::TAIL_FRACTION_DEFAULT;
use tailgauge::ConfidenceLevel;

use crate::Invalid;

#[derive(Debug, Parser)]
#[command(name = "tailgauge", version, about = "Finite-sample bias of GPD tail quantiles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit a GPD tail to a loss series and report raw and corrected quantiles.
    Fit,
    /// Tabulate the finite-sample density of the quantile estimator.
    Density,
    /// Bias and variance of the quantile estimator over an (n, xi) grid.
    BiasTable,
    /// Monte Carlo replication of the estimation experiment.
    Simulate,
    /// Fit the power-law bias model to a bias table.
    Regress,
    /// Subtract the modelled bias from a quantile estimate.
    Correct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawChoice {
    /// Rounded constants at alpha = 0.999; a freshly fitted law otherwise.
    Auto,
    /// Rounded constants (-1, 3.5, 1.5).
    Practical,
    /// Unrounded published constants.
    Published,
    /// Law fitted to a surface computed at the requested alpha.
    Fitted,
}

impl FromStr for LawChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Options {
    /// Loss series (fit) or bias table (regress).
    #[arg(long, global = true, env = "TAILGAUGE_INPUT")]
    pub input: Option<PathBuf>,
    /// Plain `key = value` file with defaults for any of these options.
    #[arg(long, global = true, env = "TAILGAUGE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Confidence level of the quantile [default: 0.999].
    #[arg(long, global = true, env = "TAILGAUGE_ALPHA")]
    pub alpha: Option<f64>,
    /// Share of the sample treated as the tail [default: 0.10].
    #[arg(long, global = true, env = "TAILGAUGE_TAIL_FRACTION")]
    pub tail_fraction: Option<f64>,
    /// Sample size (exceedance count).
    #[arg(long, global = true, env = "TAILGAUGE_N")]
    pub n: Option<u64>,
    /// Shape parameter (or its estimate, for `correct`).
    #[arg(long, global = true, env = "TAILGAUGE_XI", allow_hyphen_values = true)]
    pub xi: Option<f64>,
    /// Scale parameter [default: 1].
    #[arg(long, global = true, env = "TAILGAUGE_SIGMA")]
    pub sigma: Option<f64>,
    /// Monte Carlo replications [default: 10000].
    #[arg(long, global = true, env = "TAILGAUGE_REPLICATIONS")]
    pub replications: Option<usize>,
    /// Seed of the replication streams [default: 0].
    #[arg(long, global = true, env = "TAILGAUGE_SEED")]
    pub seed: Option<u64>,
    /// Comma-separated sample sizes of the surface grid.
    #[arg(long, global = true, env = "TAILGAUGE_GRID_N", value_delimiter = ',')]
    pub grid_n: Option<Vec<u64>>,
    /// Comma-separated shape values of the surface grid.
    #[arg(long, global = true, env = "TAILGAUGE_GRID_XI", value_delimiter = ',')]
    pub grid_xi: Option<Vec<f64>>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, env = "TAILGAUGE_OUT")]
    pub out: Option<PathBuf>,
    /// Histogram CSV written by `simulate`; defaults to `<out>.histogram.csv`.
    #[arg(long, global = true, env = "TAILGAUGE_HISTOGRAM")]
    pub histogram: Option<PathBuf>,
    /// Negate the input values (lower-tail risk of a return series).
    #[arg(long, global = true, env = "TAILGAUGE_NEGATE", num_args = 0..=1, default_missing_value = "true")]
    pub negate: Option<bool>,
    /// Allow n < 50 or xi outside [0, 0.5]; outputs are flagged.
    #[arg(long, global = true, env = "TAILGAUGE_OVERRIDE_REGION", num_args = 0..=1, default_missing_value = "true")]
    pub override_region: Option<bool>,
    /// Quantile estimate to correct.
    #[arg(long, global = true, env = "TAILGAUGE_Q_HAT")]
    pub q_hat: Option<f64>,
    /// Bias law used by `correct` [default: auto].
    #[arg(long, global = true, env = "TAILGAUGE_LAW", value_enum)]
    pub law: Option<LawChoice>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub alpha: ConfidenceLevel,
    pub tail_fraction: f64,
    pub n: Option<u64>,
    pub xi: Option<f64>,
    pub sigma: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub grid_n: Option<Vec<u64>>,
    pub grid_xi: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub histogram: Option<PathBuf>,
    pub negate: bool,
    pub override_region: bool,
    pub q_hat: Option<f64>,
    pub law: LawChoice,
}

fn parse_file(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Invalid(format!("config line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

fn from_file<T: FromStr>(file: &mut HashMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    file.remove(key)
        .map(|v| v.parse::<T>().map_err(|e| Invalid(format!("config key {key} = {v}: {e}")).into()))
        .transpose()
}

fn list_from_file<T: FromStr>(file: &mut HashMap<String, String>, key: &str) -> Result<Option<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    file.remove(key)
        .map(|v| {
            v.split(',')
                .map(|s| s.trim().parse::<T>().map_err(|e| Invalid(format!("config key {key}: {s}: {e}")).into()))
                .collect()
        })
        .transpose()
}

impl Options {
    /// Fill every option still unset from the config file, then apply
    /// defaults.
    pub fn resolve(self, command: Command) -> Result<RunConfig> {
        let mut file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                parse_file(&text)?
            }
            None => HashMap::new(),
        };
        let f = &mut file;
        macro_rules! pick {
            ($field:ident, $key:literal) => {
                match self.$field {
                    Some(v) => {
                        f.remove($key);
                        Some(v)
                    }
                    None => from_file(f, $key)?,
                }
            };
        }
        macro_rules! pick_list {
            ($field:ident, $key:literal) => {
                match self.$field {
                    Some(v) => {
                        f.remove($key);
                        Some(v)
                    }
                    None => list_from_file(f, $key)?,
                }
            };
        }
        let alpha = pick!(alpha, "alpha").unwrap_or(0.999);
        let cfg = RunConfig {
            command,
            input: pick!(input, "input"),
            alpha: ConfidenceLevel::new(alpha).map_err(|e| Invalid(e.to_string()))?,
            tail_fraction: pick!(tail_fraction, "tail-fraction").unwrap_or(TAIL_FRACTION_DEFAULT),
            n: pick!(n, "n"),
            xi: pick!(xi, "xi"),
            sigma: pick!(sigma, "sigma"),
            replications: pick!(replications, "replications"),
            seed: pick!(seed, "seed"),
            grid_n: pick_list!(grid_n, "grid-n"),
            grid_xi: pick_list!(grid_xi, "grid-xi"),
            out: pick!(out, "out"),
            histogram: pick!(histogram, "histogram"),
            negate: pick!(negate, "negate").unwrap_or(false),
            override_region: pick!(override_region, "override-region").unwrap_or(false),
            q_hat: pick!(q_hat, "q-hat"),
            law: pick!(law, "law").unwrap_or(LawChoice::Auto),
        };
        if let Some(key) = file.keys().min() {
            return Err(Invalid(format!("unknown config key {key}")).into());
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn require<T: Copy>(&self, value: Option<T>, flag: &str) -> Result<T> {
        value.ok_or_else(|| Invalid(format!("{flag} is required for this command")).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_fills_unset_options_only() {
        let dir = std::env::temp_dir().join(format!("tailgauge-config-{}", std::process::id()));
        fs::write(&dir, "# defaults\nalpha = 0.99\nxi=0.3\ngrid_n = 50, 100\nnegate = true\n").unwrap();
        let opts = Options { config: Some(dir.clone()), xi: Some(0.1), ..Default::default() };
        let cfg = opts.resolve(Command::Density).unwrap();
        fs::remove_file(dir).unwrap();
        assert_eq!(cfg.alpha.value(), 0.99);
        assert_eq!(cfg.xi, Some(0.1));
        assert_eq!(cfg.grid_n, Some(vec![50, 100]));
        assert!(cfg.negate);
        assert_eq!(cfg.tail_fraction, 0.10);
    }

    #[test]
    fn bad_file_entries_are_rejected() {
        assert!(parse_file("alpha 0.9").is_err());
        let mut m = parse_file("seed = x").unwrap();
        assert!(from_file::<u64>(&mut m, "seed").is_err());
    }
}
