use super::{mlmc_grad, Appd, MlmcConfig};
use crate::bayes::{LikelihoodDraw, PosteriorPredictive};
use crate::error::{check_dim, Result};
use crate::linalg::Vector;
use crate::rng::SimRng;
use crate::stats::mean_se;
use crate::trace::{AttackTrace, TraceStep};

/// `log((1/M) sum_m pi(y | x, gamma_m))`.
pub fn log_ppd_estimate(x: &Vector, y: f64, draws: &[LikelihoodDraw<'_>]) -> Result<f64> {
    let logliks = draws.iter().map(|d| d.loglik(x, y)).collect::<Result<Vec<_>>>()?;
    let max = logliks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    let sum: f64 = logliks.iter().map(|l| (l - max).exp()).sum();
    Ok(max + (sum / logliks.len() as f64).ln())
}

/// Monte-Carlo estimate of `-E_{pi_A}[log pi(y | x, D)]`.
pub fn ppd_objective_estimate(
    x: &Vector,
    appd: &Appd,
    source: &dyn PosteriorPredictive,
    y_draws: usize,
    posterior_draws: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    let draws = source.draw(posterior_draws, rng)?;
    let mut total = 0.0;
    for _ in 0..y_draws {
        let y = appd.sample(rng);
        total -= log_ppd_estimate(x, y, &draws)?;
    }
    Ok(total / y_draws as f64)
}

/// Monte-Carlo `KL(pi_A || pi(. | x, D))` with its standard error. Each `y`
/// gets a fresh posterior batch; the plug-in log density makes the estimate
/// biased upward.
pub fn kl_estimate(
    x: &Vector,
    appd: &Appd,
    source: &dyn PosteriorPredictive,
    y_draws: usize,
    posterior_draws: usize,
    rng: &mut SimRng,
) -> Result<(f64, f64)> {
    let mut terms = Vec::with_capacity(y_draws);
    for _ in 0..y_draws {
        let y = appd.sample(rng);
        let draws = source.draw(posterior_draws, rng)?;
        terms.push(appd.log_pdf(y) - log_ppd_estimate(x, y, &draws)?);
    }
    Ok(mean_se(&terms))
}

/// Projected SGD on `-E_{pi_A}[log pi(y | x', D)]` with the MLMC gradient,
/// starting at the centre of the feasible set.
pub fn run_ppd_attack(
    appd: &Appd,
    config: &MlmcConfig,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<AttackTrace> {
    appd.validate()?;
    config.validate()?;
    check_dim("source input vs feasible set", source.input_dim(), config.feasible.dim())?;
    let sgd = &config.sgd;
    let mut x = config.feasible.center.clone();
    let mut steps = Vec::with_capacity(sgd.iterations + 1);
    let mut objectives = Vec::with_capacity(sgd.iterations);
    for t in 0..sgd.iterations {
        let objective =
            ppd_objective_estimate(&x, appd, source, config.objective_y_draws, config.objective_draws, rng)?;
        let est = mlmc_grad(&x, appd, config, source, rng)?;
        steps.push(TraceStep {
            iteration: t,
            objective,
            samples: est.samples,
            levels: est.levels,
            x: x.clone(),
        });
        objectives.push(objective);
        x = sgd.step(&config.feasible, &x, &est.grad, t)?;
        if sgd.should_stop(&objectives) {
            break;
        }
    }
    let final_objective =
        ppd_objective_estimate(&x, appd, source, config.objective_y_draws, config.objective_draws, rng)?;
    steps.push(TraceStep {
        iteration: steps.len(),
        objective: final_objective,
        samples: 0,
        levels: Vec::new(),
        x: x.clone(),
    });
    Ok(AttackTrace {
        steps,
        final_residual: final_objective,
        final_x: x,
    })
}
