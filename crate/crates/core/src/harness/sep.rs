//! Security-evaluation sweeps: attack strength against a metric, with
//! repetition-based error bars.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::config::{AttackKind, ExperimentConfig, PointSelection, Strategy, TargetSpec};
use super::defender::{kl_divergence, moments, shifted, Defender};
use crate::analytic::{analytic_point, kl_multistart};
use crate::baselines::{fgsm_point, fgsm_ppd};
use crate::bayes::ConjugatePosterior;
use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::functional::Response;
use crate::linalg::Vector;
use crate::point::{run_point_attack, PointAttackProblem};
use crate::ppd::{run_ppd_attack, Appd, MlmcConfig};
use crate::rng::{SeedTree, SimRng};
use crate::stats::mean_se;
use crate::trace::AttackTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Squared distance between the induced predictive mean and the target.
    Residual2,
    RmseToTarget,
    KlToAppd,
    KlToClean,
    PredictiveVariance,
    PredictiveEntropy,
    SelectiveAccuracy,
    /// Coordinates left unperturbed by an attack.
    ZeroCoordinates,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Residual2 => "residual2",
            Metric::RmseToTarget => "rmse_to_target",
            Metric::KlToAppd => "kl_to_appd",
            Metric::KlToClean => "kl_to_clean",
            Metric::PredictiveVariance => "predictive_variance",
            Metric::PredictiveEntropy => "predictive_entropy",
            Metric::SelectiveAccuracy => "selective_accuracy",
            Metric::ZeroCoordinates => "zero_coordinates",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SepRecord {
    pub epsilon: f64,
    pub repetition: usize,
    pub strategy: String,
    pub metric: Metric,
    pub value: f64,
}

/// A run that errored; its cells are missing from the table.
#[derive(Debug, Clone, PartialEq)]
pub struct SepFailure {
    pub epsilon: f64,
    pub repetition: usize,
    pub strategy: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SepTable {
    pub records: Vec<SepRecord>,
    pub failures: Vec<SepFailure>,
}

/// One aggregated SEP cell: mean and two standard errors over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SepSummary {
    pub epsilon: f64,
    pub strategy: String,
    pub metric: Metric,
    pub mean: f64,
    pub two_se: f64,
    pub n: usize,
}

impl SepSummary {
    pub fn se(&self) -> f64 {
        self.two_se / 2.0
    }
}

impl SepTable {
    /// Groups records by `(epsilon, strategy, metric)` in first-seen order of
    /// the sorted records.
    pub fn aggregate(&self) -> Vec<SepSummary> {
        let mut records: Vec<&SepRecord> = self.records.iter().collect();
        records.sort_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).expect("finite epsilons"));
        let mut out: Vec<SepSummary> = Vec::new();
        let mut start = 0;
        while start < records.len() {
            let head = records[start];
            let end = start
                + records[start..]
                    .iter()
                    .take_while(|r| r.epsilon == head.epsilon && r.strategy == head.strategy && r.metric == head.metric)
                    .count();
            let values: Vec<f64> = records[start..end].iter().map(|r| r.value).collect();
            let (mean, se) = mean_se(&values);
            out.push(SepSummary {
                epsilon: head.epsilon,
                strategy: head.strategy.clone(),
                metric: head.metric,
                mean,
                two_se: 2.0 * se,
                n: values.len(),
            });
            start = end;
        }
        out
    }

    /// Aggregated cell for one strategy and metric at `epsilon`.
    pub fn cell(&self, epsilon: f64, strategy: &str, metric: Metric) -> Option<SepSummary> {
        self.aggregate()
            .into_iter()
            .find(|s| s.epsilon == epsilon && s.strategy == strategy && s.metric == metric)
    }

    /// The aggregated curve of one strategy and metric, in epsilon order.
    pub fn curve(&self, strategy: &str, metric: Metric) -> Vec<SepSummary> {
        self.aggregate()
            .into_iter()
            .filter(|s| s.strategy == strategy && s.metric == metric)
            .collect()
    }

    /// Columns `epsilon,strategy,metric,mean,two_se,n`.
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "strategy", "metric", "mean", "two_se", "n"])?;
        for s in self.aggregate() {
            w.write_record([
                s.epsilon.to_string(),
                s.strategy.clone(),
                s.metric.to_string(),
                s.mean.to_string(),
                s.two_se.to_string(),
                s.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `epsilon,repetition,strategy,metric,value`.
    pub fn write_raw_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut records: Vec<&SepRecord> = self.records.iter().collect();
        records.sort_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).expect("finite epsilons"));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "repetition", "strategy", "metric", "value"])?;
        for r in records {
            w.write_record([
                r.epsilon.to_string(),
                r.repetition.to_string(),
                r.strategy.clone(),
                r.metric.to_string(),
                r.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sort_key(r: &SepRecord) -> (f64, &str, Metric, usize) {
    (r.epsilon, r.strategy.as_str(), r.metric, r.repetition)
}

/// Inputs under attack for a config.
pub fn attack_points(cfg: &ExperimentConfig, defender: &Defender) -> Result<Vec<Vector>> {
    let points = match &cfg.attack.points {
        PointSelection::Fixed(xs) => xs.iter().map(|x| Vector::from_column_slice(x)).collect::<Vec<_>>(),
        PointSelection::Test { count } => (0..(*count).min(defender.test.len())).map(|i| defender.test.row(i)).collect(),
    };
    if points.is_empty() {
        return Err(Error::Config("no points to attack".into()));
    }
    if let Some(x) = points.iter().find(|x| x.len() != defender.dim()) {
        return Err(Error::DimensionMismatch { context: "attack point", expected: defender.dim(), got: x.len() });
    }
    Ok(points)
}

/// Point-attack target in original units.
pub fn point_target(cfg: &ExperimentConfig, defender: &Defender) -> f64 {
    match cfg.attack.target {
        TargetSpec::Value(v) => v,
        TargetSpec::TwiceTrainMean => 2.0 * defender.train_response_mean(),
    }
}

/// Normal target built from the clean predictive at `x`, in original units.
pub fn appd_for(cfg: &ExperimentConfig, defender: &Defender, x: &Vector) -> Result<Appd> {
    let (mean, variance) = moments(&defender.ppd(x)?)
        .ok_or_else(|| Error::Unsupported("clean predictive has no finite variance".into()))?;
    Ok(Appd::Normal {
        mean: cfg.attack.appd.mean_scale * mean,
        variance: cfg.attack.appd.variance_scale * variance,
    })
}

pub fn mlmc_config(cfg: &ExperimentConfig, feasible: FeasibleSet) -> MlmcConfig {
    let spec = &cfg.attack.mlmc;
    let mut m = MlmcConfig::new(feasible, cfg.attack.sgd);
    m.m0 = spec.m0;
    m.tau = spec.tau;
    m.r = spec.r;
    m.l_max = spec.l_max;
    m.b = spec.b;
    m.objective_draws = spec.objective_draws;
    m.objective_y_draws = spec.objective_y_draws;
    m
}

/// Perturbed input produced by one strategy on one clean input.
pub fn attack_once(
    cfg: &ExperimentConfig,
    defender: &Defender,
    x: &Vector,
    epsilon: f64,
    strategy: Strategy,
    rng: &mut SimRng,
) -> Result<Vector> {
    if epsilon == 0.0 {
        return Ok(x.clone());
    }
    let feasible = FeasibleSet::new(x.clone(), epsilon, cfg.attack.norm)?;
    let source = &defender.predictor;
    match cfg.attack.kind {
        AttackKind::Point => {
            let target = point_target(cfg, defender) - defender.offset;
            match strategy {
                Strategy::Analytic => {
                    let sol = analytic_point(defender.posterior.mean(), x, target, epsilon, cfg.attack.norm)?;
                    Ok(x + sol.r_star)
                }
                _ => {
                    let prob = PointAttackProblem::new(
                        Arc::new(Response),
                        Vector::from_element(1, target),
                        feasible,
                        cfg.attack.sgd,
                        cfg.attack.n_mu,
                        cfg.attack.m_grad,
                    )?;
                    if strategy == Strategy::Fgsm {
                        fgsm_point(&prob, source, rng)
                    } else {
                        Ok(run_point_attack(&prob, source, rng)?.final_x)
                    }
                }
            }
        }
        AttackKind::Ppd => {
            let appd = shifted(&appd_for(cfg, defender, x)?, -defender.offset);
            match strategy {
                Strategy::Analytic => match &defender.posterior {
                    ConjugatePosterior::Gaussian(post) => Ok(kl_multistart(&appd, post, &feasible)?.x),
                    ConjugatePosterior::Nig { .. } => {
                        Err(Error::Unsupported("closed-form KL needs the known-variance model".into()))
                    }
                },
                Strategy::Stochastic => Ok(run_ppd_attack(&appd, &mlmc_config(cfg, feasible), source, rng)?.final_x),
                Strategy::Fgsm => fgsm_ppd(&appd, &mlmc_config(cfg, feasible), source, rng),
            }
        }
    }
}

/// Full iterate trace of the stochastic attack on one clean input.
pub fn attack_trace(
    cfg: &ExperimentConfig,
    defender: &Defender,
    x: &Vector,
    epsilon: f64,
    rng: &mut SimRng,
) -> Result<AttackTrace> {
    let feasible = FeasibleSet::new(x.clone(), epsilon, cfg.attack.norm)?;
    match cfg.attack.kind {
        AttackKind::Point => {
            let prob = PointAttackProblem::new(
                Arc::new(Response),
                Vector::from_element(1, point_target(cfg, defender) - defender.offset),
                feasible,
                cfg.attack.sgd,
                cfg.attack.n_mu,
                cfg.attack.m_grad,
            )?;
            run_point_attack(&prob, &defender.predictor, rng)
        }
        AttackKind::Ppd => {
            let appd = shifted(&appd_for(cfg, defender, x)?, -defender.offset);
            run_ppd_attack(&appd, &mlmc_config(cfg, feasible), &defender.predictor, rng)
        }
    }
}

/// Exact metrics of the perturbed inputs against the defender.
pub fn evaluate(
    cfg: &ExperimentConfig,
    defender: &Defender,
    clean: &[Vector],
    attacked: &[Vector],
) -> Result<Vec<(Metric, f64)>> {
    let k = clean.len() as f64;
    match cfg.attack.kind {
        AttackKind::Point => {
            let target = point_target(cfg, defender);
            let mut sq = 0.0;
            for x in attacked {
                sq += (defender.mean(x)? - target).powi(2);
            }
            let residual2 = sq / k;
            Ok(vec![(Metric::Residual2, residual2), (Metric::RmseToTarget, residual2.sqrt())])
        }
        AttackKind::Ppd => {
            let (mut to_appd, mut to_clean, mut variance) = (0.0, 0.0, 0.0);
            for (x, xa) in clean.iter().zip(attacked) {
                let clean_ppd = defender.ppd(x)?;
                let induced = defender.ppd(xa)?;
                to_appd += kl_divergence(&appd_for(cfg, defender, x)?, &induced)?;
                to_clean += kl_divergence(&clean_ppd, &induced)?;
                variance += moments(&induced).map_or(f64::INFINITY, |m| m.1);
            }
            Ok(vec![
                (Metric::KlToAppd, to_appd / k),
                (Metric::KlToClean, to_clean / k),
                (Metric::PredictiveVariance, variance / k),
            ])
        }
    }
}

/// Runs every `(epsilon, repetition, strategy)` cell in parallel. Cell
/// `(i, r, s)` draws from its own stream of the config seed, so the table is
/// independent of scheduling.
pub fn run_sep_with(cfg: &ExperimentConfig, defender: &Defender) -> Result<SepTable> {
    cfg.validate()?;
    let points = attack_points(cfg, defender)?;
    let tasks: Vec<(usize, usize, Strategy)> = (0..cfg.attack.epsilons.len())
        .flat_map(|i| (0..cfg.attack.repeats).flat_map(move |r| cfg.attack.strategies.iter().map(move |&s| (i, r, s))))
        .collect();
    let attack_tree = SeedTree::new(cfg.seed).child(2);
    let outcomes: Vec<std::result::Result<Vec<SepRecord>, SepFailure>> = tasks
        .par_iter()
        .map(|&(i, rep, strategy)| {
            let epsilon = cfg.attack.epsilons[i];
            let mut rng = attack_tree.child(i as u64).child(rep as u64).rng(strategy as u64);
            let mut run = || -> Result<Vec<SepRecord>> {
                let attacked = points
                    .iter()
                    .map(|x| attack_once(cfg, defender, x, epsilon, strategy, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let metrics = evaluate(cfg, defender, &points, &attacked)?;
                if let Some((m, v)) = metrics.iter().find(|(_, v)| !v.is_finite()) {
                    return Err(Error::Data(format!("non-finite {m}: {v}")));
                }
                Ok(metrics
                    .into_iter()
                    .map(|(metric, value)| SepRecord {
                        epsilon,
                        repetition: rep,
                        strategy: strategy.name().to_string(),
                        metric,
                        value,
                    })
                    .collect())
            };
            run().map_err(|e| {
                warn!(epsilon, rep, strategy = strategy.name(), error = %e, "SEP cell failed");
                SepFailure { epsilon, repetition: rep, strategy: strategy.name().to_string(), message: e.to_string() }
            })
        })
        .collect();
    let mut table = SepTable::default();
    for o in outcomes {
        match o {
            Ok(records) => table.records.extend(records),
            Err(f) => table.failures.push(f),
        }
    }
    info!(records = table.records.len(), failures = table.failures.len(), "SEP sweep finished");
    Ok(table)
}

pub fn run_sep(cfg: &ExperimentConfig) -> Result<SepTable> {
    let defender = Defender::from_config(cfg)?;
    run_sep_with(cfg, &defender)
}
