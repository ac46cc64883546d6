//! L1 against L2 feasible sets: how many covariates an attack leaves alone.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelSpec, PriorSpec};
use super::defender::Defender;
use super::synth::{gen_synthetic, CovariateMode, SynthSpec};
use crate::error::Result;
use crate::feasible::{FeasibleSet, Norm};
use crate::functional::Response;
use crate::linalg::Vector;
use crate::point::{run_point_attack, PointAttackProblem, SgdSettings, StepSchedule};
use crate::rng::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparsitySpec {
    pub beta: Vec<f64>,
    pub n: usize,
    pub epsilon: f64,
    pub target: f64,
    pub seeds: usize,
    pub tolerance: f64,
    pub sgd: SgdSettings,
    pub n_mu: usize,
    pub m_grad: usize,
}

impl Default for SparsitySpec {
    fn default() -> Self {
        Self {
            beta: vec![2.0, -1.5, 1.0, 0.8, -0.6, 0.5, 0.3, -0.2, 0.1, 0.05],
            n: 500,
            epsilon: 0.5,
            target: 10.0,
            seeds: 10,
            tolerance: 1e-6,
            sgd: SgdSettings { eta: 0.05, iterations: 500, schedule: StepSchedule::Cosine, ..Default::default() },
            n_mu: 16,
            m_grad: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityRun {
    pub seed: usize,
    pub l1_zeros: usize,
    pub l2_zeros: usize,
}

/// Runs the same point attack from the origin under both norms for each
/// seed and counts coordinates with `|delta| < tolerance`.
pub fn sparsity_experiment(root_seed: u64, spec: &SparsitySpec) -> Result<Vec<SparsityRun>> {
    let root = SeedTree::new(root_seed).child(7);
    (0..spec.seeds)
        .into_par_iter()
        .map(|s| {
            let tree = root.child(s as u64);
            let synth = SynthSpec { n: spec.n, beta: spec.beta.clone(), sigma2: 1.0, covariates: CovariateMode::Independent };
            let data = gen_synthetic(&synth, &mut tree.rng(0))?;
            let defender = Defender::fit(
                &ModelSpec::KnownVariance { sigma2: 1.0 },
                &PriorSpec::default(),
                data,
                crate::bayes::Dataset::empty(spec.beta.len()),
                0.0,
            )?;
            let x = Vector::zeros(spec.beta.len());
            let mut zeros = [0usize; 2];
            for (k, norm) in [Norm::L1, Norm::L2].into_iter().enumerate() {
                let prob = PointAttackProblem::new(
                    Arc::new(Response),
                    Vector::from_element(1, spec.target),
                    FeasibleSet::new(x.clone(), spec.epsilon, norm)?,
                    spec.sgd,
                    spec.n_mu,
                    spec.m_grad,
                )?;
                let out = run_point_attack(&prob, &defender.predictor, &mut tree.rng(1 + k as u64))?;
                zeros[k] = (&out.final_x - &x).iter().filter(|d| d.abs() < spec.tolerance).count();
            }
            Ok(SparsityRun { seed: s, l1_zeros: zeros[0], l2_zeros: zeros[1] })
        })
        .collect()
}
