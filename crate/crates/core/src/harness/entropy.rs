//! Entropy-target attacks on a small Bayesian softmax classifier.
//!
//! In-distribution points are pushed toward uniform class probabilities and
//! out-of-distribution points toward a confident prediction of their modal
//! class. Selective prediction ranks the pooled points by predictive entropy
//! and keeps the most confident fraction.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sep::{Metric, SepFailure, SepRecord, SepTable};
use crate::bayes::{Dataset, McmcChain, ParamDraw, ParamPrior, PosteriorBackend, PredictiveModel, Predictor, RwmSettings};
use crate::error::{Error, Result};
use crate::feasible::{FeasibleSet, Norm};
use crate::functional::OneHot;
use crate::linalg::{Matrix, Vector};
use crate::point::{run_point_attack, PointAttackProblem, SgdSettings, StepSchedule};
use crate::rng::{SeedTree, SimRng};
use crate::stats::entropy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropySpec {
    pub classes: usize,
    /// Training points per class.
    pub per_class: usize,
    /// Distance of each class blob from the origin.
    pub radius: f64,
    pub blob_sd: f64,
    pub ood_center: Vec<f64>,
    pub ood_sd: f64,
    /// Attacked in-distribution and out-of-distribution points.
    pub id_points: usize,
    pub ood_points: usize,
    pub epsilons: Vec<f64>,
    /// A tight prior keeps the classifier smooth enough that the score
    /// gradient does not vanish on the ridges between two classes.
    pub weight_sd: f64,
    pub mcmc: RwmSettings,
    pub bank_size: usize,
    pub sgd: SgdSettings,
    pub n_mu: usize,
    pub m_grad: usize,
    /// Fraction of pooled points kept by selective prediction.
    pub retention: f64,
}

impl Default for EntropySpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 60,
            radius: 2.5,
            blob_sd: 0.7,
            ood_center: vec![0.0, 0.0],
            ood_sd: 0.3,
            id_points: 30,
            ood_points: 30,
            epsilons: vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0],
            weight_sd: 0.5,
            mcmc: RwmSettings { burn_in: 5_000, thin: 10, initial_step: 0.1, target_accept: 0.3 },
            bank_size: 400,
            sgd: SgdSettings { eta: 1.0, iterations: 500, schedule: StepSchedule::Cosine, ..Default::default() },
            n_mu: 16,
            m_grad: 16,
            retention: 0.5,
        }
    }
}

impl EntropySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if self.classes < 2 {
            return bad("at least two classes are needed");
        }
        if self.per_class == 0 || self.bank_size == 0 || self.id_points == 0 {
            return bad("training, bank and attacked point counts must be positive");
        }
        if self.ood_center.len() != 2 {
            return bad("the blob classifier works in two dimensions");
        }
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return bad("retention must lie in (0, 1]");
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return bad("radii must be nonnegative");
        }
        Ok(())
    }

    fn class_center(&self, k: usize) -> [f64; 2] {
        let angle = TAU * k as f64 / self.classes as f64;
        [self.radius * angle.cos(), self.radius * angle.sin()]
    }
}

fn blob_point(center: &[f64], sd: f64, rng: &mut SimRng) -> Vector {
    Vector::from_fn(2, |i, _| center[i] + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Labelled in-distribution blobs, `count` points per class.
pub fn gen_blobs(spec: &EntropySpec, count: usize, rng: &mut SimRng) -> Result<Dataset> {
    let n = count * spec.classes;
    let mut x = Matrix::zeros(n, 2);
    let mut y = Vector::zeros(n);
    for k in 0..spec.classes {
        let c = spec.class_center(k);
        for j in 0..count {
            let row = k * count + j;
            x.set_row(row, &blob_point(&c, spec.blob_sd, rng).transpose());
            y[row] = k as f64;
        }
    }
    Dataset::new(x, y)
}

/// Class probabilities averaged over every draw of the bank.
pub fn bank_probs(model: &PredictiveModel, bank: &[ParamDraw], x: &Vector) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; model.classes().unwrap_or(1)];
    for d in bank {
        for (a, p) in acc.iter_mut().zip(model.class_probs(x, d)?) {
            *a += p;
        }
    }
    Ok(acc.into_iter().map(|a| a / bank.len() as f64).collect())
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Accuracy on the `retention` fraction of points with the lowest entropy.
/// `correct[i]` is false for points that have no right answer.
pub fn selective_accuracy(entropies: &[f64], correct: &[bool], retention: f64) -> f64 {
    let keep = ((entropies.len() as f64 * retention).round() as usize).clamp(1, entropies.len());
    let mut order: Vec<usize> = (0..entropies.len()).collect();
    order.sort_by(|&a, &b| entropies[a].total_cmp(&entropies[b]));
    order[..keep].iter().filter(|&&i| correct[i]).count() as f64 / keep as f64
}

/// Point index and radius index.
type Job = (usize, usize);

struct Point {
    x: Vector,
    /// True label, `None` out of distribution.
    label: Option<usize>,
    target: Vector,
}

#[derive(Debug, Clone)]
pub struct EntropyOutcome {
    /// Per-point entropies under strategies `id` and `ood`, and selective
    /// accuracy under `mixed`.
    pub table: SepTable,
    pub acceptance_rate: f64,
}

/// Fits the classifier by random-walk Metropolis, then attacks every point
/// at every radius. Each point reuses one random stream across radii.
pub fn entropy_experiment(seed: u64, spec: &EntropySpec) -> Result<EntropyOutcome> {
    spec.validate()?;
    let tree = SeedTree::new(seed).child(6);
    let mut data_rng = tree.rng(0);
    let train = Arc::new(gen_blobs(spec, spec.per_class, &mut data_rng)?);
    let model = PredictiveModel::CategoricalSoftmax { dim: 2, classes: spec.classes };
    let chain = McmcChain::for_model(
        model,
        train,
        ParamPrior { weight_sd: spec.weight_sd, noise_gamma: None },
        spec.mcmc,
    )?;
    let run = chain.run(spec.bank_size, &mut tree.rng(1));
    let bank = run.draws;
    let predictor = Predictor::new(model, PosteriorBackend::sample_bank(bank.clone())?);

    let id_per_class = spec.id_points.div_ceil(spec.classes);
    let id = gen_blobs(spec, id_per_class, &mut data_rng)?;
    let uniform = Vector::from_element(spec.classes, 1.0 / spec.classes as f64);
    let mut points: Vec<Point> = (0..spec.id_points)
        .map(|i| Point { x: id.row(i), label: Some(id.y()[i] as usize), target: uniform.clone() })
        .collect();
    for _ in 0..spec.ood_points {
        let x = blob_point(&spec.ood_center, spec.ood_sd, &mut data_rng);
        let mut target = Vector::zeros(spec.classes);
        target[argmax(&bank_probs(&model, &bank, &x)?)] = 1.0;
        points.push(Point { x, label: None, target });
    }

    let attacks = tree.child(2);
    let jobs: Vec<Job> =
        (0..points.len()).flat_map(|p| (0..spec.epsilons.len()).map(move |e| (p, e))).collect();
    let results: Vec<(Job, Result<Vec<f64>>)> = jobs
        .into_par_iter()
        .map(|(p, e)| {
            let point = &points[p];
            let eps = spec.epsilons[e];
            let res = (|| {
                let x = if eps == 0.0 {
                    point.x.clone()
                } else {
                    let prob = PointAttackProblem::new(
                        Arc::new(OneHot { classes: spec.classes }),
                        point.target.clone(),
                        FeasibleSet::new(point.x.clone(), eps, Norm::L2)?,
                        spec.sgd,
                        spec.n_mu,
                        spec.m_grad,
                    )?;
                    run_point_attack(&prob, &predictor, &mut attacks.rng(p as u64))?.final_x
                };
                bank_probs(&model, &bank, &x)
            })();
            ((p, e), res)
        })
        .collect();

    let mut table = SepTable::default();
    let mut probs = vec![vec![None; spec.epsilons.len()]; points.len()];
    for ((p, e), res) in results {
        let strategy = if points[p].label.is_some() { "id" } else { "ood" };
        match res {
            Ok(pr) => {
                table.records.push(SepRecord {
                    epsilon: spec.epsilons[e],
                    repetition: p,
                    strategy: strategy.into(),
                    metric: Metric::PredictiveEntropy,
                    value: entropy(&pr),
                });
                probs[p][e] = Some(pr);
            }
            Err(err) => table.failures.push(SepFailure {
                epsilon: spec.epsilons[e],
                repetition: p,
                strategy: strategy.into(),
                message: err.to_string(),
            }),
        }
    }
    for (e, &eps) in spec.epsilons.iter().enumerate() {
        let mut ent = Vec::new();
        let mut correct = Vec::new();
        for (p, point) in points.iter().enumerate() {
            if let Some(pr) = &probs[p][e] {
                ent.push(entropy(pr));
                correct.push(point.label == Some(argmax(pr)));
            }
        }
        if !ent.is_empty() {
            table.records.push(SepRecord {
                epsilon: eps,
                repetition: 0,
                strategy: "mixed".into(),
                metric: Metric::SelectiveAccuracy,
                value: selective_accuracy(&ent, &correct, spec.retention),
            });
        }
    }
    table.records.sort_by(|a, b| {
        (a.strategy.as_str(), a.repetition).cmp(&(b.strategy.as_str(), b.repetition)).then(a.epsilon.total_cmp(&b.epsilon))
    });
    Ok(EntropyOutcome { table, acceptance_rate: run.acceptance_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_extremes() {
        assert!((entropy(&[1.0 / 3.0; 3]) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
    }

    #[test]
    fn selective_accuracy_keeps_lowest_entropy() {
        let ent = [0.1, 0.9, 0.2, 0.8];
        let correct = [true, true, false, false];
        assert_eq!(selective_accuracy(&ent, &correct, 0.5), 0.5);
        assert_eq!(selective_accuracy(&ent, &correct, 0.25), 1.0);
        assert_eq!(selective_accuracy(&ent, &correct, 1.0), 0.5);
    }

    #[test]
    fn blobs_are_labelled_by_center() {
        let spec = EntropySpec::default();
        let data = gen_blobs(&spec, 50, &mut crate::rng::seeded(3)).unwrap();
        for i in 0..data.len() {
            let k = data.y()[i] as usize;
            let c = spec.class_center(k);
            let d = ((data.x()[(i, 0)] - c[0]).powi(2) + (data.x()[(i, 1)] - c[1]).powi(2)).sqrt();
            assert!(d < 5.0 * spec.blob_sd);
        }
    }
}
