//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthSpec;
use crate::error::{Error, Result};
use crate::feasible::Norm;
use crate::point::{SgdSettings, StepSchedule};

/// Likelihood and conjugate prior family of the defender's model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Gaussian linear regression with known noise variance.
    KnownVariance { sigma2: f64 },
    /// Normal-inverse-gamma prior over coefficients and noise variance.
    Nig { a0: f64, b0: f64 },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::KnownVariance { sigma2: 1.0 }
    }
}

/// `beta ~ N(mean, precision^{-1} I)`; `mean` defaults to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub precision: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { mean: None, precision: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic {
        #[serde(flatten)]
        spec: SynthSpec,
        #[serde(default = "default_split")]
        split: f64,
    },
    Csv {
        path: PathBuf,
        response: String,
        #[serde(default = "default_split")]
        split: f64,
        #[serde(default = "yes")]
        standardize: bool,
        /// Subtract the training response mean so a model without intercept
        /// fits; reported means are shifted back.
        #[serde(default = "yes")]
        center_response: bool,
    },
}

fn default_split() -> f64 {
    0.7
}

fn yes() -> bool {
    true
}

impl DatasetSpec {
    pub fn split(&self) -> f64 {
        match self {
            DatasetSpec::Synthetic { split, .. } | DatasetSpec::Csv { split, .. } => *split,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Point,
    Ppd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Analytic,
    Stochastic,
    Fgsm,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Analytic => "analytic",
            Strategy::Stochastic => "stochastic",
            Strategy::Fgsm => "fgsm",
        }
    }
}

/// Point-attack target in original response units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    Value(f64),
    /// Twice the training-set response mean.
    TwiceTrainMean,
}

/// Normal adversarial predictive expressed relative to the clean one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppdSpec {
    #[serde(default = "one")]
    pub mean_scale: f64,
    pub variance_scale: f64,
}

impl Default for AppdSpec {
    fn default() -> Self {
        Self { mean_scale: 1.0, variance_scale: 4.0 }
    }
}

/// Which clean inputs get attacked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSelection {
    Fixed(Vec<Vec<f64>>),
    /// The first `count` test rows.
    Test { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmcSpec {
    pub m0: usize,
    pub tau: f64,
    pub r: usize,
    pub l_max: usize,
    pub b: usize,
    pub objective_draws: usize,
    pub objective_y_draws: usize,
}

impl Default for MlmcSpec {
    fn default() -> Self {
        Self {
            m0: 8,
            tau: 1.5,
            r: 1,
            l_max: 6,
            b: 1,
            objective_draws: 64,
            objective_y_draws: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default = "default_target")]
    pub target: TargetSpec,
    #[serde(default)]
    pub appd: AppdSpec,
    #[serde(default = "default_norm")]
    pub norm: Norm,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    pub points: PointSelection,
    #[serde(default)]
    pub sgd: SgdSettings,
    #[serde(default = "default_batch")]
    pub n_mu: usize,
    #[serde(default = "default_batch")]
    pub m_grad: usize,
    #[serde(default)]
    pub mlmc: MlmcSpec,
}

fn default_target() -> TargetSpec {
    TargetSpec::Value(3.0)
}

fn default_norm() -> Norm {
    Norm::L2
}

fn default_repeats() -> usize {
    10
}

fn default_batch() -> usize {
    16
}

fn all_strategies() -> Vec<Strategy> {
    vec![Strategy::Analytic, Strategy::Stochastic, Strategy::Fgsm]
}

impl AttackSpec {
    /// Point attack on a single input; grid `0, 0.1, ..., 0.5`.
    pub fn point_default(x: Vec<f64>) -> Self {
        Self {
            kind: AttackKind::Point,
            target: default_target(),
            appd: AppdSpec::default(),
            norm: Norm::L2,
            epsilons: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            repeats: default_repeats(),
            strategies: all_strategies(),
            points: PointSelection::Fixed(vec![x]),
            sgd: SgdSettings { eta: 0.05, iterations: 500, schedule: StepSchedule::Cosine, ..Default::default() },
            n_mu: default_batch(),
            m_grad: default_batch(),
            mlmc: MlmcSpec::default(),
        }
    }

    /// Predictive-distribution attack on a single input; grid `0, 0.5, 1, 2`.
    pub fn ppd_default(x: Vec<f64>) -> Self {
        // cosine annealing: the variance-raising direction is flat while the
        // mean direction is steep, so long early travel and a vanishing final
        // step are both needed
        Self {
            kind: AttackKind::Ppd,
            epsilons: vec![0.0, 0.5, 1.0, 2.0],
            sgd: SgdSettings { eta: 0.3, iterations: 2000, schedule: StepSchedule::Cosine, ..Default::default() },
            mlmc: MlmcSpec { b: 16, ..MlmcSpec::default() },
            ..Self::point_default(x)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    pub dataset: DatasetSpec,
    pub attack: AttackSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The synthetic regression testbed with iid covariates.
    pub fn synthetic_point(seed: u64) -> Self {
        Self {
            model: ModelSpec::default(),
            prior: PriorSpec::default(),
            dataset: DatasetSpec::Synthetic { spec: SynthSpec::default(), split: 0.7 },
            attack: AttackSpec::point_default(vec![0.5, 0.0]),
            seed,
            output_dir: default_output(),
        }
    }

    /// Small-sample (`n = 10`) testbed for predictive-distribution attacks.
    pub fn synthetic_ppd(seed: u64) -> Self {
        Self {
            dataset: DatasetSpec::Synthetic { spec: SynthSpec { n: 10, ..SynthSpec::default() }, split: 0.7 },
            attack: AttackSpec::ppd_default(vec![0.43, 0.33]),
            ..Self::synthetic_point(seed)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let eps = &self.attack.epsilons;
        if eps.is_empty() || eps.iter().any(|e| !(*e >= 0.0)) || eps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config(format!("epsilon grid must be nonnegative and ascending, got {eps:?}")));
        }
        if self.attack.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        let split = self.dataset.split();
        if !(split > 0.0 && split < 1.0) {
            return Err(Error::Config(format!("split must lie in (0, 1), got {split}")));
        }
        if self.attack.n_mu == 0 || self.attack.m_grad == 0 {
            return Err(Error::Config("n_mu and m_grad must be positive".into()));
        }
        match self.model {
            ModelSpec::KnownVariance { sigma2 } if !(sigma2 > 0.0) => {
                Err(Error::Config("sigma2 must be positive".into()))
            }
            ModelSpec::Nig { a0, b0 } if !(a0 > 0.0 && b0 > 0.0) => Err(Error::Config("a0 and b0 must be positive".into())),
            _ if !(self.prior.precision > 0.0) => Err(Error::Config("prior precision must be positive".into())),
            _ => Ok(()),
        }
    }
}
