//! Small dense SPD helpers on top of nalgebra's Cholesky factorisation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub(crate) fn cholesky(m: &Matrix, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::Singular(what));
    }
    let sym = (m + m.transpose()) * 0.5;
    let asym = (m - &sym).amax();
    if asym > 1e-8 * (1.0 + m.amax()) {
        return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
    }
    let chol = Cholesky::new(sym).ok_or(Error::Singular(what))?;
    // reject factors whose pivots collapsed relative to the matrix scale
    let diag = chol.l_dirty().diagonal();
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if !(min > 0.0) || min / max < 1e-12 {
        return Err(Error::Singular(what));
    }
    Ok(chol)
}

/// Solves `m z = rhs` for SPD `m`.
pub fn spd_solve(m: &Matrix, rhs: &Vector, what: &'static str) -> Result<Vector> {
    Ok(cholesky(m, what)?.solve(rhs))
}

pub fn spd_inverse(m: &Matrix, what: &'static str) -> Result<Matrix> {
    Ok(cholesky(m, what)?.inverse())
}

/// Quadratic form `v^T m v`.
pub fn quad_form(m: &Matrix, v: &Vector) -> f64 {
    v.dot(&(m * v))
}

/// Lower Cholesky factor `L` with `m = L L^T`.
pub fn cholesky_lower(m: &Matrix, what: &'static str) -> Result<Matrix> {
    Ok(cholesky(m, what)?.l())
}
