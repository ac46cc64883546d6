//! Attacks on posterior predictive expectations.
//!
//! The objective is `J(x') = ||mu(x') - G*||^2` with
//! `mu(x') = E_{gamma|D} E_{y|x',gamma}[g(x', y)]`. Its gradient is
//! `2 (mu(x') - G*)^T grad mu(x')`, a product of two expectations, so
//! estimating each factor from an independent batch gives an unbiased
//! gradient. `grad mu` uses the score-function form
//! `E[grad_x g + g (grad_x log pi(y | x', gamma))^T]`, or for Gaussian-linear
//! likelihoods the reparameterisation `y = beta^T x' + sqrt(phi) z`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bayes::{LikelihoodDraw, PosteriorPredictive};
use crate::error::{check_dim, Error, Result};
use crate::feasible::FeasibleSet;
use crate::functional::Functional;
use crate::linalg::{Matrix, Vector};
use crate::rng::SimRng;
use crate::trace::{AttackTrace, TraceStep};

/// Projected SGD settings shared by both attack families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSettings {
    pub eta: f64,
    pub iterations: usize,
    #[serde(default)]
    pub schedule: StepSchedule,
    /// Step along the sign of the gradient.
    #[serde(default)]
    pub sign_step: bool,
    /// Stop once the mean objective over the last `window` iterations drops
    /// below `tol`.
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
}

/// Step size as a function of the iteration `t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    #[default]
    Constant,
    /// `eta / sqrt(t + 1)`.
    InvSqrt,
    /// `eta (1 + cos(pi t / T)) / 2`: long early travel, vanishing final steps.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub window: usize,
    pub tol: f64,
}

impl Default for SgdSettings {
    fn default() -> Self {
        Self {
            eta: 0.01,
            iterations: 500,
            schedule: StepSchedule::Constant,
            sign_step: false,
            early_stop: None,
        }
    }
}

impl SgdSettings {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || self.iterations == 0 {
            return Err(Error::InvalidParameter("SGD needs eta > 0 and at least one iteration".into()));
        }
        Ok(())
    }

    pub(crate) fn rate(&self, t: usize) -> f64 {
        match self.schedule {
            StepSchedule::Constant => self.eta,
            StepSchedule::InvSqrt => self.eta / ((t + 1) as f64).sqrt(),
            StepSchedule::Cosine => {
                let frac = t as f64 / self.iterations as f64;
                0.5 * self.eta * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }

    pub(crate) fn should_stop(&self, objectives: &[f64]) -> bool {
        match self.early_stop {
            Some(EarlyStop { window, tol }) if window > 0 && objectives.len() >= window => {
                objectives[objectives.len() - window..].iter().sum::<f64>() / (window as f64) < tol
            }
            _ => false,
        }
    }

    /// One projected step; returns `x` unchanged for an exactly zero gradient.
    pub(crate) fn step(&self, feasible: &FeasibleSet, x: &Vector, grad: &Vector, t: usize) -> Result<Vector> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { iteration: t });
        }
        let direction = if self.sign_step { grad.map(sign) } else { grad.clone() };
        feasible.project(&(x - direction * self.rate(t)))
    }
}

/// `sgn` with `sgn(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct PointAttackProblem {
    pub functional: Arc<dyn Functional>,
    pub target: Vector,
    pub feasible: FeasibleSet,
    pub sgd: SgdSettings,
    /// Draws for the expectation factor.
    pub n_mu: usize,
    /// Draws for the gradient factor.
    pub m_grad: usize,
}

impl PointAttackProblem {
    pub fn new(
        functional: Arc<dyn Functional>,
        target: Vector,
        feasible: FeasibleSet,
        sgd: SgdSettings,
        n_mu: usize,
        m_grad: usize,
    ) -> Result<Self> {
        check_dim("target vs functional output", functional.dim(), target.len())?;
        if n_mu == 0 || m_grad == 0 {
            return Err(Error::InvalidParameter("N and M must be at least 1".into()));
        }
        sgd.validate()?;
        Ok(Self {
            functional,
            target,
            feasible,
            sgd,
            n_mu,
            m_grad,
        })
    }
}

/// How `grad mu` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientForm {
    ScoreFunction,
    Reparameterized,
}

/// Whether the two factors of `grad J` use independent draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Independent,
    /// Both factors from one batch of size `N`. Biased; diagnostics only.
    Shared,
}

fn draw_with_responses<'a>(
    source: &'a dyn PosteriorPredictive,
    x: &Vector,
    count: usize,
    rng: &mut SimRng,
) -> Result<Vec<(LikelihoodDraw<'a>, f64)>> {
    source
        .draw(count, rng)?
        .into_iter()
        .map(|d| {
            let y = d.sample(x, rng)?;
            Ok((d, y))
        })
        .collect()
}

fn mean_value(prob: &PointAttackProblem, x: &Vector, batch: &[(LikelihoodDraw<'_>, f64)]) -> Result<Vector> {
    let mut acc = Vector::zeros(prob.functional.dim());
    for (_, y) in batch {
        acc += prob.functional.value(x, *y)?;
    }
    Ok(acc / batch.len() as f64)
}

fn mean_jacobian(
    prob: &PointAttackProblem,
    x: &Vector,
    batch: &[(LikelihoodDraw<'_>, f64)],
    form: GradientForm,
) -> Result<Matrix> {
    let g = &prob.functional;
    let mut acc = Matrix::zeros(g.dim(), x.len());
    for (draw, y) in batch {
        acc += g.grad_x(x, *y)?;
        match form {
            GradientForm::ScoreFunction => {
                acc += g.value(x, *y)? * draw.score_x(x, *y)?.transpose();
            }
            GradientForm::Reparameterized => {
                let (beta, _) = draw
                    .linear_gaussian()
                    .ok_or_else(|| Error::Unsupported("reparameterised gradient needs a Gaussian-linear likelihood".into()))?;
                let dg_dy = g
                    .grad_y(x, *y)
                    .ok_or_else(|| Error::Unsupported("reparameterised gradient needs g differentiable in y".into()))?;
                acc += dg_dy * beta.transpose();
            }
        }
    }
    Ok(acc / batch.len() as f64)
}

/// Unbiased estimate of `mu(x')` from `N` joint draws.
pub fn estimate_mu(
    prob: &PointAttackProblem,
    x: &Vector,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<Vector> {
    let batch = draw_with_responses(source, x, prob.n_mu, rng)?;
    mean_value(prob, x, &batch)
}

/// Score-function estimate of `grad mu(x')` (`dim G* x p`) from `M` fresh draws.
pub fn estimate_grad_mu(
    prob: &PointAttackProblem,
    x: &Vector,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<Matrix> {
    let batch = draw_with_responses(source, x, prob.m_grad, rng)?;
    mean_jacobian(prob, x, &batch, GradientForm::ScoreFunction)
}

/// Reparameterised estimate of `grad mu(x')`; Gaussian-linear likelihoods only.
pub fn estimate_grad_mu_reparam(
    prob: &PointAttackProblem,
    x: &Vector,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<Matrix> {
    let batch = draw_with_responses(source, x, prob.m_grad, rng)?;
    mean_jacobian(prob, x, &batch, GradientForm::Reparameterized)
}

/// Gradient estimate together with the `mu` estimate it used.
#[derive(Debug, Clone)]
pub struct GradJ {
    pub grad: Vector,
    pub mu: Vector,
}

impl GradJ {
    pub fn objective(&self, target: &Vector) -> f64 {
        (&self.mu - target).norm_squared()
    }
}

pub fn grad_j_with(
    prob: &PointAttackProblem,
    x: &Vector,
    source: &dyn PosteriorPredictive,
    form: GradientForm,
    mode: BatchMode,
    rng: &mut SimRng,
) -> Result<GradJ> {
    let (mu, jac) = match mode {
        BatchMode::Independent => {
            let first = draw_with_responses(source, x, prob.n_mu, rng)?;
            let second = draw_with_responses(source, x, prob.m_grad, rng)?;
            (mean_value(prob, x, &first)?, mean_jacobian(prob, x, &second, form)?)
        }
        BatchMode::Shared => {
            let batch = draw_with_responses(source, x, prob.n_mu, rng)?;
            (mean_value(prob, x, &batch)?, mean_jacobian(prob, x, &batch, form)?)
        }
    };
    let grad = jac.transpose() * (&mu - &prob.target) * 2.0;
    Ok(GradJ { grad, mu })
}

/// Unbiased estimate of `grad J(x')` from independent batches.
pub fn grad_j(
    prob: &PointAttackProblem,
    x: &Vector,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<Vector> {
    Ok(grad_j_with(prob, x, source, GradientForm::ScoreFunction, BatchMode::Independent, rng)?.grad)
}

fn run(
    prob: &PointAttackProblem,
    source: &dyn PosteriorPredictive,
    form: GradientForm,
    rng: &mut SimRng,
) -> Result<AttackTrace> {
    check_dim("source input vs feasible set", source.input_dim(), prob.feasible.dim())?;
    let mut x = prob.feasible.center.clone();
    let mut steps = Vec::with_capacity(prob.sgd.iterations + 1);
    let mut objectives = Vec::with_capacity(prob.sgd.iterations);
    for t in 0..prob.sgd.iterations {
        let est = grad_j_with(prob, &x, source, form, BatchMode::Independent, rng)?;
        let objective = est.objective(&prob.target);
        steps.push(TraceStep {
            iteration: t,
            objective,
            samples: prob.n_mu + prob.m_grad,
            levels: Vec::new(),
            x: x.clone(),
        });
        objectives.push(objective);
        x = prob.sgd.step(&prob.feasible, &x, &est.grad, t)?;
        if prob.sgd.should_stop(&objectives) {
            break;
        }
    }
    let mu = estimate_mu(prob, &x, source, rng)?;
    let final_objective = (&mu - &prob.target).norm_squared();
    steps.push(TraceStep {
        iteration: steps.len(),
        objective: final_objective,
        samples: prob.n_mu,
        levels: Vec::new(),
        x: x.clone(),
    });
    Ok(AttackTrace {
        steps,
        final_residual: final_objective.sqrt(),
        final_x: x,
    })
}

/// Projected SGD with the score-function gradient, starting at the centre of
/// the feasible set.
pub fn run_point_attack(
    prob: &PointAttackProblem,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<AttackTrace> {
    run(prob, source, GradientForm::ScoreFunction, rng)
}

/// Projected SGD with the reparameterised gradient.
pub fn run_point_attack_reparam(
    prob: &PointAttackProblem,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<AttackTrace> {
    run(prob, source, GradientForm::Reparameterized, rng)
}

pub fn run_point_attack_with(
    prob: &PointAttackProblem,
    source: &dyn PosteriorPredictive,
    form: GradientForm,
    rng: &mut SimRng,
) -> Result<AttackTrace> {
    run(prob, source, form, rng)
}
