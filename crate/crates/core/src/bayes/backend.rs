//! Posterior sampling backends and the predictor abstraction the attacks
//! consume.

use rand::Rng;

use super::{GaussianPosterior, McmcChain, NigPosterior, ParamDraw, PredictiveModel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_lower, spd_inverse, Matrix, Vector};
use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub enum ConjugatePosterior {
    Nig { post: NigPosterior, chol_cov: Matrix },
    Gaussian(GaussianPosterior),
}

impl ConjugatePosterior {
    pub fn nig(post: NigPosterior) -> Result<Self> {
        let cov = spd_inverse(&post.lambda, "posterior precision")?;
        let chol_cov = cholesky_lower(&cov, "posterior covariance")?;
        Ok(Self::Nig { post, chol_cov })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Nig { post, .. } => post.dim(),
            Self::Gaussian(g) => g.dim(),
        }
    }

    /// Posterior mean of the coefficients.
    pub fn mean(&self) -> &Vector {
        match self {
            Self::Nig { post, .. } => &post.mu,
            Self::Gaussian(g) => g.mean(),
        }
    }
}

/// Source of posterior draws.
#[derive(Debug, Clone)]
pub enum PosteriorBackend {
    ExactConjugate(ConjugatePosterior),
    /// Stored draws, resampled with replacement. When the bank comes from a
    /// correlated chain this only approximates iid posterior sampling.
    SampleBank(Vec<ParamDraw>),
    McmcChain(McmcChain),
}

impl PosteriorBackend {
    pub fn gaussian(post: GaussianPosterior) -> Self {
        Self::ExactConjugate(ConjugatePosterior::Gaussian(post))
    }

    pub fn nig(post: NigPosterior) -> Result<Self> {
        Ok(Self::ExactConjugate(ConjugatePosterior::nig(post)?))
    }

    pub fn sample_bank(draws: Vec<ParamDraw>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidParameter("sample bank must not be empty".into()));
        }
        Ok(Self::SampleBank(draws))
    }

    pub fn draw_params<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<ParamDraw>> {
        if count == 0 {
            return Err(Error::InvalidParameter("draw count must be at least 1".into()));
        }
        Ok(match self {
            Self::ExactConjugate(ConjugatePosterior::Nig { post, chol_cov }) => {
                (0..count).map(|_| post.sample(chol_cov, rng)).collect()
            }
            Self::ExactConjugate(ConjugatePosterior::Gaussian(post)) => {
                (0..count).map(|_| post.sample(rng)).collect()
            }
            Self::SampleBank(bank) => (0..count).map(|_| bank[rng.gen_range(0..bank.len())].clone()).collect(),
            Self::McmcChain(chain) => chain.run(count, rng).draws,
        })
    }
}

/// A likelihood family paired with a posterior, optionally seeing only a
/// subset of the covariates.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: PredictiveModel,
    pub backend: PosteriorBackend,
    features: Option<Vec<usize>>,
    input_dim: usize,
}

impl Predictor {
    pub fn new(model: PredictiveModel, backend: PosteriorBackend) -> Self {
        let input_dim = model.input_dim();
        Self {
            model,
            backend,
            features: None,
            input_dim,
        }
    }

    /// Restricts the model to the covariates `features` of an
    /// `input_dim`-dimensional input.
    pub fn with_features(mut self, features: Vec<usize>, input_dim: usize) -> Result<Self> {
        check_dim("feature subset vs model dimension", self.model.input_dim(), features.len())?;
        if features.iter().any(|&f| f >= input_dim) {
            return Err(Error::InvalidParameter("feature index out of range".into()));
        }
        self.features = Some(features);
        self.input_dim = input_dim;
        Ok(self)
    }

    pub fn features(&self) -> Option<&[usize]> {
        self.features.as_deref()
    }
}

/// Anything that can produce joint posterior draws `(likelihood, gamma)`.
pub trait PosteriorPredictive: Send + Sync {
    fn input_dim(&self) -> usize;
    fn draw(&self, count: usize, rng: &mut SimRng) -> Result<Vec<LikelihoodDraw<'_>>>;
}

impl PosteriorPredictive for Predictor {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn draw(&self, count: usize, rng: &mut SimRng) -> Result<Vec<LikelihoodDraw<'_>>> {
        Ok(self
            .backend
            .draw_params(count, rng)?
            .into_iter()
            .map(|params| LikelihoodDraw::new(self, 0, params))
            .collect())
    }
}

/// A posterior draw bound to the likelihood that generated it.
#[derive(Debug, Clone)]
pub struct LikelihoodDraw<'a> {
    model: &'a PredictiveModel,
    features: Option<&'a [usize]>,
    input_dim: usize,
    pub member: usize,
    pub params: ParamDraw,
}

impl<'a> LikelihoodDraw<'a> {
    pub fn new(predictor: &'a Predictor, member: usize, params: ParamDraw) -> Self {
        Self {
            model: &predictor.model,
            features: predictor.features(),
            input_dim: predictor.input_dim,
            member,
            params,
        }
    }

    pub fn model(&self) -> &PredictiveModel {
        self.model
    }

    fn local(&self, x: &Vector) -> Result<Vector> {
        check_dim("covariate vector", self.input_dim, x.len())?;
        Ok(match self.features {
            Some(f) => Vector::from_iterator(f.len(), f.iter().map(|&i| x[i])),
            None => x.clone(),
        })
    }

    fn scatter(&self, local: Vector) -> Vector {
        match self.features {
            Some(f) => {
                let mut full = Vector::zeros(self.input_dim);
                for (k, &i) in f.iter().enumerate() {
                    full[i] += local[k];
                }
                full
            }
            None => local,
        }
    }

    pub fn loglik(&self, x: &Vector, y: f64) -> Result<f64> {
        self.model.loglik(&self.local(x)?, y, &self.params)
    }

    pub fn score_x(&self, x: &Vector, y: f64) -> Result<Vector> {
        Ok(self.scatter(self.model.score_x(&self.local(x)?, y, &self.params)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &Vector, rng: &mut R) -> Result<f64> {
        self.model.sample_predictive(&self.local(x)?, &self.params, rng)
    }

    pub fn class_probs(&self, x: &Vector) -> Result<Vec<f64>> {
        self.model.class_probs(&self.local(x)?, &self.params)
    }

    pub fn mean(&self, x: &Vector) -> Result<f64> {
        self.model.mean(&self.local(x)?, &self.params)
    }

    /// Full-dimensional coefficients and noise variance when the likelihood
    /// is Gaussian-linear, for the reparameterised estimator.
    pub fn linear_gaussian(&self) -> Option<(Vector, f64)> {
        match self.model {
            PredictiveModel::GaussianLinear { .. } => Some((self.scatter(self.params.beta.clone()), self.params.phi)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{nig_update, Dataset, NigParams};
    use crate::rng::seeded;

    #[test]
    fn single_draw_bank_repeats() {
        let d = ParamDraw::new(Vector::from_vec(vec![1.0, 2.0]), 0.5).unwrap();
        let backend = PosteriorBackend::sample_bank(vec![d.clone()]).unwrap();
        let draws = backend.draw_params(3, &mut seeded(0)).unwrap();
        assert_eq!(draws, vec![d.clone(), d.clone(), d]);
        assert!(PosteriorBackend::sample_bank(vec![]).is_err());
        assert!(backend.draw_params(0, &mut seeded(0)).is_err());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let prior = NigParams::new(Vector::zeros(2), Matrix::identity(2, 2), 2.0, 2.0).unwrap();
        let backend = PosteriorBackend::nig(prior).unwrap();
        let a = backend.draw_params(50, &mut seeded(8)).unwrap();
        let b = backend.draw_params(50, &mut seeded(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nig_draw_covariance_matches_posterior() {
        let mut rng = seeded(21);
        let x = Matrix::from_fn(8, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = Vector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let prior = NigParams::new(Vector::zeros(2), Matrix::identity(2, 2), 3.0, 2.0).unwrap();
        let post = nig_update(&prior, &Dataset::new(x, y).unwrap()).unwrap();
        let expected = spd_inverse(&post.lambda, "l").unwrap() * post.mean_variance().unwrap();
        let backend = PosteriorBackend::nig(post.clone()).unwrap();
        let n = 100_000;
        let draws = backend.draw_params(n, &mut rng).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let prods: Vec<f64> = draws
                .iter()
                .map(|d| (d.beta[i] - post.mu[i]) * (d.beta[j] - post.mu[j]))
                .collect();
            let m = prods.iter().sum::<f64>() / n as f64;
            let sd = (prods.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            let se = sd / (n as f64).sqrt();
            assert!((m - expected[(i, j)]).abs() < 3.0 * se, "cov[{i},{j}]: {m} vs {}", expected[(i, j)]);
        }
    }

    #[test]
    fn feature_subset_scatters_scores() {
        let model = PredictiveModel::GaussianLinear { dim: 1 };
        let d = ParamDraw::new(Vector::from_element(1, 2.0), 1.0).unwrap();
        let p = Predictor::new(model, PosteriorBackend::sample_bank(vec![d.clone()]).unwrap())
            .with_features(vec![2], 3)
            .unwrap();
        let draw = LikelihoodDraw::new(&p, 0, d);
        let x = Vector::from_vec(vec![5.0, 5.0, 1.0]);
        let s = draw.score_x(&x, 3.0).unwrap();
        assert_eq!(s, Vector::from_vec(vec![0.0, 0.0, 2.0]));
        assert_eq!(draw.linear_gaussian().unwrap().0, Vector::from_vec(vec![0.0, 0.0, 2.0]));
    }
}
