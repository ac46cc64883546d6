//! The defender's fitted conjugate model and exact predictive metrics.

use super::config::{DatasetSpec, ExperimentConfig, ModelSpec, PriorSpec};
use super::synth::gen_synthetic;
use crate::bayes::{
    gaussian_update, load_dataset, nig_update, ppd_normal_params, ppd_t_params, ConjugatePosterior, Dataset,
    NigPrior, PosteriorBackend, PredictiveModel, Predictor,
};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::ppd::Appd;
use crate::rng::SeedTree;

/// Conjugate regression model fitted on the training split. Responses may be
/// centred internally; `offset` is added back to every reported mean.
#[derive(Debug, Clone)]
pub struct Defender {
    pub predictor: Predictor,
    pub posterior: ConjugatePosterior,
    pub train: Dataset,
    pub test: Dataset,
    pub offset: f64,
}

/// Train and test splits for a config; the data use stream 0 and the split
/// stream 1 of the config seed.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset, f64)> {
    let tree = SeedTree::new(cfg.seed);
    match &cfg.dataset {
        DatasetSpec::Synthetic { spec, split } => {
            let data = gen_synthetic(spec, &mut tree.rng(0))?;
            let (train, test) = data.split(*split, tree.child(1).seed())?;
            Ok((train, test, 0.0))
        }
        DatasetSpec::Csv { path, response, split, standardize, center_response } => {
            let (train, test) = load_dataset(path, response, *split, *standardize, tree.child(1).seed())?;
            if !*center_response {
                return Ok((train, test, 0.0));
            }
            let offset = train.y().mean();
            let shift = |d: &Dataset| Dataset::new(d.x().clone(), d.y().add_scalar(-offset));
            Ok((shift(&train)?, shift(&test)?, offset))
        }
    }
}

impl Defender {
    pub fn fit(model: &ModelSpec, prior: &PriorSpec, train: Dataset, test: Dataset, offset: f64) -> Result<Self> {
        let p = train.dim();
        let mu0 = match &prior.mean {
            Some(m) if m.len() == p => Vector::from_column_slice(m),
            Some(m) => return Err(Error::DimensionMismatch { context: "prior mean", expected: p, got: m.len() }),
            None => Vector::zeros(p),
        };
        let lambda0 = Matrix::identity(p, p) * prior.precision;
        let posterior = match *model {
            ModelSpec::KnownVariance { sigma2 } => {
                ConjugatePosterior::Gaussian(gaussian_update(&mu0, &lambda0, sigma2, &train)?)
            }
            ModelSpec::Nig { a0, b0 } => ConjugatePosterior::nig(nig_update(&NigPrior::new(mu0, lambda0, a0, b0)?, &train)?)?,
        };
        let predictor = Predictor::new(
            PredictiveModel::GaussianLinear { dim: p },
            PosteriorBackend::ExactConjugate(posterior.clone()),
        );
        Ok(Self { predictor, posterior, train, test, offset })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let (train, test, offset) = load_splits(cfg)?;
        Self::fit(&cfg.model, &cfg.prior, train, test, offset)
    }

    pub fn dim(&self) -> usize {
        self.posterior.dim()
    }

    /// Exact predictive at `x` in original response units.
    pub fn ppd(&self, x: &Vector) -> Result<Appd> {
        match &self.posterior {
            ConjugatePosterior::Gaussian(g) => {
                let n = ppd_normal_params(g, x)?;
                Ok(Appd::Normal { mean: n.mean + self.offset, variance: n.variance })
            }
            ConjugatePosterior::Nig { post, .. } => {
                let t = ppd_t_params(post, x)?;
                Ok(Appd::StudentT { df: t.df, loc: t.loc + self.offset, scale: t.scale })
            }
        }
    }

    /// Predictive mean in original units.
    pub fn mean(&self, x: &Vector) -> Result<f64> {
        Ok(self.posterior.mean().dot(x) + self.offset)
    }

    /// Mean in original units of the training response.
    pub fn train_response_mean(&self) -> f64 {
        self.train.y().mean() + self.offset
    }
}

/// Mean and variance of a continuous target; `None` for an infinite variance.
pub fn moments(d: &Appd) -> Option<(f64, f64)> {
    match d {
        Appd::Normal { mean, variance } => Some((*mean, *variance)),
        Appd::StudentT { df, loc, scale } if *df > 2.0 => Some((*loc, scale * df / (df - 2.0))),
        _ => None,
    }
}

/// Shifts a continuous distribution by `delta`.
pub fn shifted(d: &Appd, delta: f64) -> Appd {
    match d {
        Appd::Normal { mean, variance } => Appd::Normal { mean: mean + delta, variance: *variance },
        Appd::StudentT { df, loc, scale } => Appd::StudentT { df: *df, loc: loc + delta, scale: *scale },
        other => other.clone(),
    }
}

const QUADRATURE_INTERVALS: usize = 20_000;

/// `KL(p || q)` for univariate continuous distributions: closed form for two
/// normals, otherwise composite Simpson after mapping the real line onto
/// `(-pi/2, pi/2)` with `y = centre + width * tan(theta)`, so heavy tails are
/// integrated rather than truncated.
pub fn kl_divergence(p: &Appd, q: &Appd) -> Result<f64> {
    if let (Appd::Normal { mean: m1, variance: v1 }, Appd::Normal { mean: m2, variance: v2 }) = (p, q) {
        return Ok(0.5 * (v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / (2.0 * v2) - 0.5);
    }
    let (center, width) = match (p, q) {
        (_, Appd::Categorical { .. }) | (Appd::Categorical { .. }, _) => {
            return Err(Error::Unsupported("KL between categorical and continuous".into()))
        }
        (Appd::Normal { mean, variance }, _) => (*mean, variance.sqrt()),
        (Appd::StudentT { loc, scale, .. }, _) => (*loc, scale.sqrt()),
    };
    let n = QUADRATURE_INTERVALS;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let h = 2.0 * half_pi / n as f64;
    let mut total = 0.0;
    // the endpoints carry zero mass
    for i in 1..n {
        let theta = -half_pi + h * i as f64;
        let y = center + width * theta.tan();
        let jacobian = width / theta.cos().powi(2);
        let lp = p.log_pdf(y);
        let term = if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() * (lp - q.log_pdf(y)) * jacobian };
        total += if i % 2 == 1 { 4.0 } else { 2.0 } * term;
    }
    Ok(total * h / 3.0)
}
