//! Empirical unbiasedness checks of the gradient estimators against the
//! closed-form gradients of the conjugate Gaussian testbed.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::defender::Defender;
use super::sep::{appd_for, mlmc_config};
use crate::analytic::kl_normal_ppd_grad;
use crate::bayes::ConjugatePosterior;
use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::functional::Response;
use crate::linalg::Vector;
use crate::point::{grad_j_with, BatchMode, GradientForm, PointAttackProblem, SgdSettings};
use crate::ppd::mlmc_grad;
use crate::rng::SeedTree;
use crate::stats::mean_se;

/// Replicate counts and batch sizes for [`validate_gradients`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckSpec {
    pub replicates: usize,
    pub n_mu: usize,
    pub m_grad: usize,
    /// Batch size of the shared-batch negative control.
    pub control_batch: usize,
    pub z_threshold: f64,
    pub bins: usize,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            n_mu: 16,
            m_grad: 16,
            control_batch: 1,
            z_threshold: 4.0,
            bins: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    ScoreFunction,
    Reparameterized,
    Mlmc,
    /// Score-function estimator with both factors from one batch; biased on
    /// purpose.
    SharedBatchControl,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::ScoreFunction => "score_function",
            Estimator::Reparameterized => "reparameterized",
            Estimator::Mlmc => "mlmc",
            Estimator::SharedBatchControl => "shared_batch_control",
        }
    }

    fn is_control(&self) -> bool {
        matches!(self, Estimator::SharedBatchControl)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub estimator: Estimator,
    pub coordinate: usize,
    pub analytic: f64,
    pub mean: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct EstimatorSamples {
    pub estimator: Estimator,
    pub analytic: Vector,
    pub samples: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub samples: Vec<EstimatorSamples>,
    pub z_threshold: f64,
}

impl GradCheckReport {
    /// Unbiased estimators stay within the threshold on every coordinate.
    pub fn estimator_passes(&self, estimator: Estimator) -> bool {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator)
            .all(|r| r.z.abs() <= self.z_threshold)
    }

    /// The negative control exceeds the threshold somewhere.
    pub fn control_detected(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.estimator.is_control())
            .any(|r| r.z.abs() > self.z_threshold)
    }

    pub fn passed(&self) -> bool {
        self.samples
            .iter()
            .filter(|s| !s.estimator.is_control())
            .all(|s| self.estimator_passes(s.estimator))
            && self.control_detected()
    }

    /// Columns `estimator,coordinate,analytic,mean,se,z,pass`. For the
    /// control, `pass` means the bias was detected.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["estimator", "coordinate", "analytic", "mean", "se", "z", "pass"])?;
        for r in &self.rows {
            let pass = if r.estimator.is_control() {
                self.control_detected()
            } else {
                r.z.abs() <= self.z_threshold
            };
            w.write_record([
                r.estimator.name().to_string(),
                r.coordinate.to_string(),
                r.analytic.to_string(),
                r.mean.to_string(),
                r.se.to_string(),
                r.z.to_string(),
                pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `estimator,coordinate,bin_lo,bin_hi,count,analytic`; equal-width
    /// bins over the sample range.
    pub fn write_histograms(&self, path: impl AsRef<Path>, bins: usize) -> Result<()> {
        let bins = bins.max(1);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["estimator", "coordinate", "bin_lo", "bin_hi", "count", "analytic"])?;
        for s in &self.samples {
            for j in 0..s.analytic.len() {
                let vals: Vec<f64> = s.samples.iter().map(|g| g[j]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
                let mut counts = vec![0usize; bins];
                for v in &vals {
                    counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
                }
                for (b, c) in counts.iter().enumerate() {
                    w.write_record([
                        s.estimator.name().to_string(),
                        j.to_string(),
                        (lo + width * b as f64).to_string(),
                        (lo + width * (b + 1) as f64).to_string(),
                        c.to_string(),
                        s.analytic[j].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn summarize(estimator: Estimator, analytic: &Vector, samples: &[Vector]) -> Vec<GradCheckRow> {
    (0..analytic.len())
        .map(|j| {
            let vals: Vec<f64> = samples.iter().map(|g| g[j]).collect();
            let (mean, se) = mean_se(&vals);
            GradCheckRow {
                estimator,
                coordinate: j,
                analytic: analytic[j],
                mean,
                se,
                z: (mean - analytic[j]) / se,
            }
        })
        .collect()
}

fn gaussian_posterior(defender: &Defender) -> Result<&crate::bayes::GaussianPosterior> {
    match &defender.posterior {
        ConjugatePosterior::Gaussian(g) => Ok(g),
        ConjugatePosterior::Nig { .. } => Err(Error::Config("gradient checks need the known-variance model".into())),
    }
}

/// Replicates each estimator at a fixed input and compares coordinate means
/// with the exact gradient. `point_cfg` supplies the point-attack testbed
/// (first fixed point, target) and `ppd_cfg` the distribution-attack testbed
/// (first fixed point, normal target, MLMC settings).
pub fn validate_gradients(
    point_cfg: &ExperimentConfig,
    ppd_cfg: &ExperimentConfig,
    spec: &GradCheckSpec,
) -> Result<GradCheckReport> {
    let tree = SeedTree::new(point_cfg.seed).child(3);
    let mut samples = Vec::new();

    let defender = Defender::from_config(point_cfg)?;
    let post = gaussian_posterior(&defender)?;
    let x = super::sep::attack_points(point_cfg, &defender)?.remove(0);
    let target = super::sep::point_target(point_cfg, &defender) - defender.offset;
    let analytic = post.mean() * (2.0 * (post.mean().dot(&x) - target));
    let problem = |n_mu, m_grad| {
        PointAttackProblem::new(
            Arc::new(Response),
            Vector::from_element(1, target),
            FeasibleSet::new(x.clone(), 1.0, point_cfg.attack.norm)?,
            SgdSettings::default(),
            n_mu,
            m_grad,
        )
    };
    let unbiased = problem(spec.n_mu, spec.m_grad)?;
    let control = problem(spec.control_batch, spec.control_batch)?;
    let runs = [
        (Estimator::ScoreFunction, &unbiased, GradientForm::ScoreFunction, BatchMode::Independent),
        (Estimator::Reparameterized, &unbiased, GradientForm::Reparameterized, BatchMode::Independent),
        (Estimator::SharedBatchControl, &control, GradientForm::ScoreFunction, BatchMode::Shared),
    ];
    for (k, (estimator, prob, form, mode)) in runs.into_iter().enumerate() {
        let stream = tree.child(k as u64);
        let draws = (0..spec.replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream.rng(r as u64);
                Ok(grad_j_with(prob, &x, &defender.predictor, form, mode, &mut rng)?.grad)
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(EstimatorSamples { estimator, analytic: analytic.clone(), samples: draws });
    }

    let ppd_defender = Defender::from_config(ppd_cfg)?;
    let ppd_post = gaussian_posterior(&ppd_defender)?;
    let x = super::sep::attack_points(ppd_cfg, &ppd_defender)?.remove(0);
    let appd = super::defender::shifted(&appd_for(ppd_cfg, &ppd_defender, &x)?, -ppd_defender.offset);
    // the entropy of the target does not depend on x', so the KL gradient is
    // the gradient of the cross-entropy MLMC estimates
    let analytic = kl_normal_ppd_grad(&appd, ppd_post, &x)?;
    let config = mlmc_config(ppd_cfg, FeasibleSet::new(x.clone(), 1.0, ppd_cfg.attack.norm)?);
    let stream = tree.child(10);
    let draws = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.rng(r as u64);
            Ok(mlmc_grad(&x, &appd, &config, &ppd_defender.predictor, &mut rng)?.grad)
        })
        .collect::<Result<Vec<_>>>()?;
    samples.push(EstimatorSamples { estimator: Estimator::Mlmc, analytic, samples: draws });

    let rows = samples
        .iter()
        .flat_map(|s| summarize(s.estimator, &s.analytic, &s.samples))
        .collect();
    Ok(GradCheckReport { rows, samples, z_threshold: spec.z_threshold })
}
