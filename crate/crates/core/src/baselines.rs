//! One-shot sign-step baseline and gray-box attacks through a weighted
//! ensemble of candidate models.

use rand::distributions::{Distribution, WeightedIndex};
use tracing::warn;

use crate::bayes::{LikelihoodDraw, ParamDraw, PosteriorPredictive, Predictor};
use crate::error::{Error, Result};
use crate::feasible::{FeasibleSet, Norm};
use crate::linalg::Vector;
use crate::point::{grad_j, run_point_attack, sign, PointAttackProblem};
use crate::ppd::{mlmc_grad, run_ppd_attack, Appd, MlmcConfig};
use crate::rng::SimRng;
use crate::trace::AttackTrace;

/// `x - eps * sgn(grad)`, projected onto the `eps`-ball around `x`.
pub fn fgsm_like(x: &Vector, grad: &Vector, eps: f64, norm: Norm) -> Result<Vector> {
    if grad.iter().all(|g| *g == 0.0) {
        warn!("zero gradient estimate; sign step is a no-op");
        return Ok(x.clone());
    }
    let ball = FeasibleSet::new(x.clone(), eps, norm)?;
    ball.project(&(x - grad.map(sign) * eps))
}

/// Sign step from one `grad J` estimate at the clean input, i.e. the budget
/// of a single point-attack iteration.
pub fn fgsm_point(prob: &PointAttackProblem, source: &dyn PosteriorPredictive, rng: &mut SimRng) -> Result<Vector> {
    let center = &prob.feasible.center;
    let grad = grad_j(prob, center, source, rng)?;
    fgsm_like(center, &grad, prob.feasible.epsilon, prob.feasible.norm)
}

/// Sign step from one MLMC gradient at the clean input.
pub fn fgsm_ppd(appd: &Appd, config: &MlmcConfig, source: &dyn PosteriorPredictive, rng: &mut SimRng) -> Result<Vector> {
    let center = &config.feasible.center;
    let est = mlmc_grad(center, appd, config, source, rng)?;
    fgsm_like(center, &est.grad, config.feasible.epsilon, config.feasible.norm)
}

/// Candidate models weighted by the attacker's prior belief in each.
#[derive(Debug, Clone)]
pub struct ModelEnsemble {
    members: Vec<Predictor>,
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl ModelEnsemble {
    pub fn new(members: Vec<Predictor>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("ensemble needs at least one member".into()));
        }
        if members.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "ensemble weights",
                expected: members.len(),
                got: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "ensemble weights must be nonnegative and sum to 1, got {weights:?}"
            )));
        }
        let dim = members[0].input_dim();
        if let Some(m) = members.iter().find(|m| m.input_dim() != dim) {
            return Err(Error::DimensionMismatch {
                context: "ensemble member input dimension",
                expected: dim,
                got: m.input_dim(),
            });
        }
        let index = WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self { members, weights, index })
    }

    pub fn single(member: Predictor) -> Self {
        Self::new(vec![member], vec![1.0]).expect("one member with unit weight")
    }

    pub fn members(&self) -> &[Predictor] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl PosteriorPredictive for ModelEnsemble {
    fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    /// Member indices are drawn first; each member then supplies its share of
    /// parameter draws in one batch so MCMC members run a single chain.
    fn draw(&self, count: usize, rng: &mut SimRng) -> Result<Vec<LikelihoodDraw<'_>>> {
        let picks: Vec<usize> = (0..count).map(|_| self.index.sample(rng)).collect();
        let mut pools: Vec<std::vec::IntoIter<ParamDraw>> = Vec::with_capacity(self.members.len());
        for (i, member) in self.members.iter().enumerate() {
            let k = picks.iter().filter(|&&p| p == i).count();
            let params = if k == 0 { Vec::new() } else { member.backend.draw_params(k, rng)? };
            pools.push(params.into_iter());
        }
        Ok(picks
            .into_iter()
            .map(|i| {
                let params = pools[i].next().expect("pool sized from the picks");
                LikelihoodDraw::new(&self.members[i], i, params)
            })
            .collect())
    }
}

/// One draw from the model-averaged predictive: member, its parameters, and
/// a response from its likelihood.
pub fn bma_ppd_draw(ensemble: &ModelEnsemble, x: &Vector, rng: &mut SimRng) -> Result<(usize, ParamDraw, f64)> {
    let draw = ensemble.draw(1, rng)?.pop().expect("one draw requested");
    let y = draw.sample(x, rng)?;
    Ok((draw.member, draw.params, y))
}

#[derive(Debug, Clone, Copy)]
pub enum GrayboxProblem<'a> {
    Point(&'a PointAttackProblem),
    Ppd { appd: &'a Appd, config: &'a MlmcConfig },
}

/// Runs the white-box algorithm against the ensemble's averaged predictive.
/// Scoring the result against the defender is left to the caller.
pub fn graybox_attack(problem: GrayboxProblem<'_>, ensemble: &ModelEnsemble, rng: &mut SimRng) -> Result<AttackTrace> {
    match problem {
        GrayboxProblem::Point(prob) => run_point_attack(prob, ensemble, rng),
        GrayboxProblem::Ppd { appd, config } => run_ppd_attack(appd, config, ensemble, rng),
    }
}
