use thiserror::Error;

/// Errors raised by models, estimators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not numerically positive definite: {0}")]
    Singular(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: f64, classes: usize },
    #[error("likelihood underflowed for every posterior draw at y = {0}")]
    DegenerateLikelihood(f64),
    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error("predictive mean does not depend on the covariates (zero posterior mean)")]
    UnattackableMean,
    #[error("expected cost diverges for tau = {0} (need tau > 1)")]
    DivergentCost(f64),
    #[error("dataset error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
