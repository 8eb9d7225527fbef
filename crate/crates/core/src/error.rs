use thiserror::Error;

/// Errors raised by the tail-model pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("too few exceedances: {found} available, at least {required} required")]
    TooFewExceedances { found: usize, required: usize },

    #[error("quantile not in the modeled tail: (N/n)(1-alpha) = {ratio} must be < 1")]
    QuantileNotInTail { ratio: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("outside validated region (n >= 50, 0 <= xi <= 0.5): n = {n}, xi = {xi}; pass an explicit override to proceed")]
    OutsideValidatedRegion { n: u64, xi: f64 },

    #[error("quadrature failed to reach rel_tol {rel_tol:e} within {max_refinements} refinements on [{lo}, {hi}]")]
    Quadrature {
        rel_tol: f64,
        max_refinements: u32,
        lo: f64,
        hi: f64,
    },

    #[error("at grid cell (n = {n}, xi = {xi}): {source}")]
    GridCell {
        n: u64,
        xi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("simulation degenerate: {failed} of {replications} fits failed")]
    DegenerateSimulation { failed: usize, replications: usize },
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to rejected inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Quadrature { .. }
            | Error::RankDeficient(_)
            | Error::DegenerateSimulation { .. } => true,
            Error::GridCell { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
