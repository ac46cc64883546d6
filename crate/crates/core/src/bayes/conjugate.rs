//! Conjugate linear-Gaussian posteriors.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::{Dataset, ParamDraw};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_lower, quad_form, spd_inverse, spd_solve, Matrix, Vector};

/// Normal-inverse-gamma parameters `(mu, lambda, a, b)`:
/// `beta | s2 ~ N(mu, s2 lambda^{-1})`, `s2 ~ InvGamma(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NigParams {
    pub mu: Vector,
    pub lambda: Matrix,
    pub a: f64,
    pub b: f64,
}

pub type NigPrior = NigParams;
pub type NigPosterior = NigParams;

impl NigParams {
    pub fn new(mu: Vector, lambda: Matrix, a: f64, b: f64) -> Result<Self> {
        check_dim("NIG precision rows", mu.len(), lambda.nrows())?;
        check_dim("NIG precision cols", mu.len(), lambda.ncols())?;
        if !(a > 0.0) || !(b > 0.0) {
            return Err(Error::InvalidParameter(format!("NIG shape/scale must be positive (a={a}, b={b})")));
        }
        cholesky_lower(&lambda, "NIG precision")?;
        Ok(Self { mu, lambda, a, b })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `E[s2] = b / (a - 1)`, defined for `a > 1`.
    pub fn mean_variance(&self) -> Option<f64> {
        (self.a > 1.0).then(|| self.b / (self.a - 1.0))
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, chol_cov: &Matrix, rng: &mut R) -> ParamDraw {
        let gamma = Gamma::new(self.a, 1.0 / self.b).expect("validated shape/scale");
        let sigma2 = 1.0 / gamma.sample(rng);
        let z = Vector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = &self.mu + (chol_cov * z) * sigma2.sqrt();
        ParamDraw { beta, phi: sigma2 }
    }
}

/// Exact normal-inverse-gamma update.
pub fn nig_update(prior: &NigPrior, data: &Dataset) -> Result<NigPosterior> {
    check_dim("dataset columns vs prior dimension", prior.dim(), data.dim())?;
    if data.is_empty() {
        return Ok(prior.clone());
    }
    let x = data.x();
    let y = data.y();
    let lambda_n = &prior.lambda + x.transpose() * x;
    let rhs = &prior.lambda * &prior.mu + x.transpose() * y;
    let mu_n = spd_solve(&lambda_n, &rhs, "posterior precision")?;
    let a_n = prior.a + data.len() as f64 / 2.0;
    let b_n = prior.b
        + 0.5 * (y.dot(y) + quad_form(&prior.lambda, &prior.mu) - quad_form(&lambda_n, &mu_n));
    if !(b_n > 0.0) {
        return Err(Error::Singular("posterior scale b_n collapsed to zero"));
    }
    Ok(NigParams {
        mu: mu_n,
        lambda: lambda_n,
        a: a_n,
        b: b_n,
    })
}

/// Student-t posterior predictive.
///
/// `scale` is the squared scale `(b/a)(1 + x^T lambda^{-1} x)`: the density
/// is that of `loc + sqrt(scale) * T_df`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TPredictive {
    pub df: f64,
    pub loc: f64,
    pub scale: f64,
}

impl TPredictive {
    pub fn variance(&self) -> Option<f64> {
        (self.df > 2.0).then(|| self.scale * self.df / (self.df - 2.0))
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        let nu = self.df;
        let z2 = (y - self.loc).powi(2) / self.scale;
        ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (nu * std::f64::consts::PI * self.scale).ln()
            - (nu + 1.0) / 2.0 * (1.0 + z2 / nu).ln()
    }
}

pub fn ppd_t_params(post: &NigPosterior, x: &Vector) -> Result<TPredictive> {
    check_dim("covariate vector", post.dim(), x.len())?;
    let solved = spd_solve(&post.lambda, x, "posterior precision")?;
    Ok(TPredictive {
        df: 2.0 * post.a,
        loc: x.dot(&post.mu),
        scale: post.b / post.a * (1.0 + x.dot(&solved)),
    })
}

/// Known-variance Gaussian posterior `beta ~ N(mu_n, lambda_n^{-1})`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mu_n: Vector,
    lambda_n: Matrix,
    sigma2: f64,
    cov: Matrix,
    chol_cov: Matrix,
}

impl GaussianPosterior {
    pub fn new(mu_n: Vector, lambda_n: Matrix, sigma2: f64) -> Result<Self> {
        check_dim("posterior precision rows", mu_n.len(), lambda_n.nrows())?;
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!("noise variance must be positive, got {sigma2}")));
        }
        let cov = spd_inverse(&lambda_n, "posterior precision")?;
        let chol_cov = cholesky_lower(&cov, "posterior covariance")?;
        Ok(Self {
            mu_n,
            lambda_n,
            sigma2,
            cov,
            chol_cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu_n.len()
    }
    pub fn mean(&self) -> &Vector {
        &self.mu_n
    }
    pub fn precision(&self) -> &Matrix {
        &self.lambda_n
    }
    pub fn covariance(&self) -> &Matrix {
        &self.cov
    }
    pub fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamDraw {
        let z = Vector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        ParamDraw {
            beta: &self.mu_n + &self.chol_cov * z,
            phi: self.sigma2,
        }
    }
}

pub fn gaussian_update(
    mu0: &Vector,
    lambda0: &Matrix,
    sigma2: f64,
    data: &Dataset,
) -> Result<GaussianPosterior> {
    check_dim("dataset columns vs prior dimension", mu0.len(), data.dim())?;
    check_dim("prior precision", mu0.len(), lambda0.nrows())?;
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be positive, got {sigma2}")));
    }
    if data.is_empty() {
        return GaussianPosterior::new(mu0.clone(), lambda0.clone(), sigma2);
    }
    let x = data.x();
    let lambda_n = lambda0 + x.transpose() * x / sigma2;
    let rhs = lambda0 * mu0 + x.transpose() * data.y() / sigma2;
    let mu_n = spd_solve(&lambda_n, &rhs, "posterior precision")?;
    GaussianPosterior::new(mu_n, lambda_n, sigma2)
}

/// Normal posterior predictive `N(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPredictive {
    pub mean: f64,
    pub variance: f64,
}

pub fn ppd_normal_params(post: &GaussianPosterior, x: &Vector) -> Result<NormalPredictive> {
    check_dim("covariate vector", post.dim(), x.len())?;
    Ok(NormalPredictive {
        mean: x.dot(&post.mu_n),
        variance: quad_form(&post.cov, x) + post.sigma2,
    })
}
