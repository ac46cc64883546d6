use crate::error::{Error, Result};
use crate::linalg::Vector;

/// One posterior draw: coefficient vector plus dispersion.
///
/// `phi` is the noise variance for Gaussian likelihoods and is fixed to 1
/// for likelihoods without a dispersion parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDraw {
    pub beta: Vector,
    pub phi: f64,
}

impl ParamDraw {
    pub fn new(beta: Vector, phi: f64) -> Result<Self> {
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::InvalidParameter(format!("dispersion must be positive, got {phi}")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(Self { beta, phi })
    }

    /// Draw without a dispersion parameter (`phi = 1`).
    pub fn coefficients(beta: Vector) -> Self {
        Self { beta, phi: 1.0 }
    }
}
