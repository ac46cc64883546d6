//! Optimal evasion attacks against Bayesian posterior predictive models.
//!
//! Two families of attacks are provided. Point attacks steer a posterior
//! predictive expectation `E[g(x', y) | x', D]` toward a target with projected
//! SGD driven by an unbiased product-of-expectations gradient. Distribution
//! attacks steer the whole predictive toward an adversarial target by
//! minimising `KL(pi_A || pi(. | x', D))`, using a randomized multilevel Monte
//! Carlo gradient that removes the bias of the nested ratio estimator.
//!
//! Closed-form oracles for conjugate linear regression live in [`analytic`];
//! the experiment drivers used by the CLI live in [`harness`].

// `!(v > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod baselines;
pub mod bayes;
pub mod error;
pub mod feasible;
pub mod functional;
pub mod harness;
pub mod linalg;
pub mod point;
pub mod ppd;
pub mod rng;
pub mod stats;
pub mod trace;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
