//! White-box against gray-box point attacks on the synthetic testbed.
//!
//! The gray-box attacker fits its own conjugate model with a different prior
//! on a dataset drawn independently from the same generator, attacks that
//! model, and the result is scored against the defender. Attack strengths
//! are given relative to `reference`: intensity `reference` is the smallest
//! radius at which the white-box attacker reaches the target exactly.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelSpec, PriorSpec};
use super::defender::{load_splits, Defender};
use super::sep::{attack_points, point_target, Metric, SepRecord, SepTable};
use crate::baselines::{graybox_attack, GrayboxProblem, ModelEnsemble};
use crate::bayes::Dataset;
use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::functional::Response;
use crate::linalg::Vector;
use crate::point::{run_point_attack, PointAttackProblem};
use crate::rng::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrayboxSpec {
    pub seeds: usize,
    /// Prior precision of the attacker's coefficients.
    pub attacker_precision: f64,
    pub intensities: Vec<f64>,
    pub reference: f64,
    /// Attacker's candidate models. When empty the attacker is a single
    /// known-variance model with prior precision `attacker_precision`.
    pub members: Vec<MemberSpec>,
}

/// One candidate model of the attacker's ensemble, fitted on the attacker's
/// own data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub model: ModelSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    pub weight: f64,
    /// Covariates the member sees; all of them when absent.
    #[serde(default)]
    pub features: Option<Vec<usize>>,
}

impl Default for GrayboxSpec {
    fn default() -> Self {
        Self {
            seeds: 20,
            attacker_precision: 2.0,
            intensities: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            reference: 0.3,
            members: Vec::new(),
        }
    }
}

/// Radius at which the exact white-box attack first reaches the target.
pub fn white_box_reach(defender: &Defender, x: &Vector, target: f64) -> Result<f64> {
    let mu = defender.posterior.mean();
    let norm = mu.norm();
    if norm == 0.0 {
        return Err(Error::UnattackableMean);
    }
    Ok((target - defender.offset - mu.dot(x)).abs() / norm)
}

/// Residual² of both attackers per seed and intensity; strategies are
/// `white_box` and `gray_box`, and `epsilon` holds the relative intensity.
pub fn graybox_experiment(cfg: &ExperimentConfig, spec: &GrayboxSpec) -> Result<SepTable> {
    let tasks: Vec<(usize, usize)> =
        (0..spec.seeds).flat_map(|s| (0..spec.intensities.len()).map(move |i| (s, i))).collect();
    let records = tasks
        .par_iter()
        .map(|&(s, i)| -> Result<Vec<SepRecord>> {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = SeedTree::new(cfg.seed).child(4).child(s as u64).seed();
            let defender = Defender::from_config(&run_cfg)?;
            // the attacker's data come from the same generator with another seed
            let mut attacker_cfg = run_cfg.clone();
            attacker_cfg.seed = SeedTree::new(run_cfg.seed).child(5).seed();
            let (train, test, offset) = load_splits(&attacker_cfg)?;
            let ensemble = attacker_ensemble(cfg, spec, train, test, offset)?;

            let x = attack_points(&run_cfg, &defender)?.remove(0);
            let target = point_target(&run_cfg, &defender);
            let intensity = spec.intensities[i];
            let epsilon = intensity / spec.reference * white_box_reach(&defender, &x, target)?;
            let prob = PointAttackProblem::new(
                Arc::new(Response),
                Vector::from_element(1, target - defender.offset),
                FeasibleSet::new(x.clone(), epsilon, run_cfg.attack.norm)?,
                run_cfg.attack.sgd,
                run_cfg.attack.n_mu,
                run_cfg.attack.m_grad,
            )?;
            // common random numbers for the paired comparison
            let stream = SeedTree::new(run_cfg.seed).child(6).child(i as u64);
            let white = run_point_attack(&prob, &defender.predictor, &mut stream.rng(0))?.final_x;
            let gray = graybox_attack(GrayboxProblem::Point(&prob), &ensemble, &mut stream.rng(0))?.final_x;
            let mut out = Vec::new();
            for (name, xa) in [("white_box", white), ("gray_box", gray)] {
                out.push(SepRecord {
                    epsilon: intensity,
                    repetition: s,
                    strategy: name.to_string(),
                    metric: Metric::Residual2,
                    value: (defender.mean(&xa)? - target).powi(2),
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SepTable { records: records.into_iter().flatten().collect(), failures: Vec::new() })
}

fn attacker_ensemble(
    cfg: &ExperimentConfig,
    spec: &GrayboxSpec,
    train: Dataset,
    test: Dataset,
    offset: f64,
) -> Result<ModelEnsemble> {
    if spec.members.is_empty() {
        let prior = PriorSpec { mean: None, precision: spec.attacker_precision };
        let attacker = Defender::fit(&ModelSpec::KnownVariance { sigma2: known_sigma2(cfg) }, &prior, train, test, offset)?;
        return Ok(ModelEnsemble::single(attacker.predictor));
    }
    let p = train.dim();
    let mut predictors = Vec::with_capacity(spec.members.len());
    for m in &spec.members {
        let predictor = match &m.features {
            None => Defender::fit(&m.model, &m.prior, train.clone(), test.clone(), offset)?.predictor,
            Some(cols) => {
                if cols.iter().any(|&c| c >= p) {
                    return Err(Error::InvalidParameter(format!("member feature index out of range for {p} covariates")));
                }
                Defender::fit(&m.model, &m.prior, train.select_columns(cols), test.select_columns(cols), offset)?
                    .predictor
                    .with_features(cols.clone(), p)?
            }
        };
        predictors.push(predictor);
    }
    ModelEnsemble::new(predictors, spec.members.iter().map(|m| m.weight).collect())
}

fn known_sigma2(cfg: &ExperimentConfig) -> f64 {
    match cfg.model {
        ModelSpec::KnownVariance { sigma2 } => sigma2,
        ModelSpec::Nig { a0, b0 } if a0 > 1.0 => b0 / (a0 - 1.0),
        ModelSpec::Nig { .. } => 1.0,
    }
}
