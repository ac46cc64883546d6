//! Attacks on the full posterior predictive distribution.
//!
//! The attacker minimises `KL(pi_A || pi(. | x', D))`, equivalently
//! `-E_{pi_A}[log pi(y | x', D)]`. For a fixed `y` the gradient is the ratio
//! `-E_gamma[grad pi(y | x', gamma)] / E_gamma[pi(y | x', gamma)]`; plugging
//! sample means into both is biased, so the gradient is debiased with a
//! randomized multilevel Monte Carlo sum over sample sizes `M0 2^l`, each
//! level difference built by antithetic coupling of two half-size batches.

mod appd;
mod attack;
mod mlmc;

pub use appd::Appd;
pub use attack::{kl_estimate, log_ppd_estimate, ppd_objective_estimate, run_ppd_attack};
pub use mlmc::{
    delta_level, expected_samples_per_iter, mlmc_grad, ratio_grad, LevelLaw, MlmcConfig, MlmcEstimate, SampleCost,
};
