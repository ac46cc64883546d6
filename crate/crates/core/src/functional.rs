//! Functionals `g(x', y)` whose posterior predictive expectation a point
//! attack steers toward a target.

use std::fmt::Debug;

use crate::bayes::{class_index, PredictiveModel};
use crate::error::Result;
use crate::linalg::{Matrix, Vector};

pub trait Functional: Debug + Send + Sync {
    /// Output dimension.
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector, y: f64) -> Result<Vector>;
    /// Jacobian in the covariates, `dim x p`.
    fn grad_x(&self, x: &Vector, y: f64) -> Result<Matrix>;
    /// Derivative in the response, when `g` is differentiable in `y`.
    fn grad_y(&self, _x: &Vector, _y: f64) -> Option<Vector> {
        None
    }
}

/// `g(x, y) = y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Response;

impl Functional for Response {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, _x: &Vector, y: f64) -> Result<Vector> {
        Ok(Vector::from_element(1, y))
    }
    fn grad_x(&self, x: &Vector, _y: f64) -> Result<Matrix> {
        Ok(Matrix::zeros(1, x.len()))
    }
    fn grad_y(&self, _x: &Vector, _y: f64) -> Option<Vector> {
        Some(Vector::from_element(1, 1.0))
    }
}

/// One-hot encoding of a class label.
#[derive(Debug, Clone, Copy)]
pub struct OneHot {
    pub classes: usize,
}

impl Functional for OneHot {
    fn dim(&self) -> usize {
        self.classes
    }
    fn value(&self, _x: &Vector, y: f64) -> Result<Vector> {
        let idx = class_index(y, self.classes)?;
        let mut v = Vector::zeros(self.classes);
        v[idx] = 1.0;
        Ok(v)
    }
    fn grad_x(&self, x: &Vector, _y: f64) -> Result<Matrix> {
        Ok(Matrix::zeros(self.classes, x.len()))
    }
}

/// `g(x, y) = x`, whose expectation has identity Jacobian.
#[derive(Debug, Clone, Copy)]
pub struct Covariates {
    pub dim: usize,
}

impl Functional for Covariates {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector, _y: f64) -> Result<Vector> {
        Ok(x.clone())
    }
    fn grad_x(&self, x: &Vector, _y: f64) -> Result<Matrix> {
        Ok(Matrix::identity(self.dim, x.len()))
    }
    fn grad_y(&self, x: &Vector, _y: f64) -> Option<Vector> {
        Some(Vector::zeros(x.len().min(self.dim)))
    }
}

/// Constant functional.
#[derive(Debug, Clone)]
pub struct Constant(pub Vector);

impl Functional for Constant {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn value(&self, _x: &Vector, _y: f64) -> Result<Vector> {
        Ok(self.0.clone())
    }
    fn grad_x(&self, x: &Vector, _y: f64) -> Result<Matrix> {
        Ok(Matrix::zeros(self.0.len(), x.len()))
    }
    fn grad_y(&self, _x: &Vector, _y: f64) -> Option<Vector> {
        Some(Vector::zeros(self.0.len()))
    }
}

/// Natural functional for a likelihood: the response for regression, the
/// one-hot label for classifiers.
pub fn default_functional(model: &PredictiveModel) -> Box<dyn Functional> {
    match model.classes() {
        Some(classes) => Box::new(OneHot { classes }),
        None => Box::new(Response),
    }
}
