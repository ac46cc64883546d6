//! Synthetic linear-regression data.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CovariateMode {
    /// iid standard normal covariates.
    Independent,
    /// Rows `z^T A` with `z` standard normal, so the covariance is `A^T A`.
    Correlated {
        #[serde(default = "default_mixing")]
        a: Vec<Vec<f64>>,
    },
}

pub fn default_mixing() -> Vec<Vec<f64>> {
    vec![vec![1.0, 2.0], vec![3.0, 4.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub covariates: CovariateMode,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            beta: vec![-1.0, 2.0],
            sigma2: 1.0,
            covariates: CovariateMode::Independent,
        }
    }
}

impl SynthSpec {
    pub fn correlated(n: usize) -> Self {
        Self {
            n,
            covariates: CovariateMode::Correlated { a: default_mixing() },
            ..Self::default()
        }
    }
}

/// `y = beta^T x + sigma * e` with standard normal noise.
pub fn gen_synthetic<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Dataset> {
    let p = spec.beta.len();
    if p == 0 || !(spec.sigma2 >= 0.0) {
        return Err(Error::InvalidParameter("synthetic data needs coefficients and sigma2 >= 0".into()));
    }
    let mixing = match &spec.covariates {
        CovariateMode::Independent => None,
        CovariateMode::Correlated { a } => {
            if a.len() != p || a.iter().any(|row| row.len() != p) {
                return Err(Error::DimensionMismatch { context: "mixing matrix", expected: p, got: a.len() });
            }
            let a = Matrix::from_row_iterator(p, p, a.iter().flatten().copied());
            cholesky(&(a.transpose() * &a), "covariate covariance")?;
            Some(a)
        }
    };
    let beta = Vector::from_column_slice(&spec.beta);
    let sigma = spec.sigma2.sqrt();
    let mut x = Matrix::from_fn(spec.n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    if let Some(a) = mixing {
        x *= a;
    }
    let noise = Vector::from_fn(spec.n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let y = &x * beta + noise;
    Dataset::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::mean_se;

    #[test]
    fn independent_moments() {
        let d = gen_synthetic(&SynthSpec::default(), &mut seeded(3)).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = d.x().column(j).iter().copied().collect();
            let (m, se) = mean_se(&col);
            assert!(m.abs() < 3.0 * se);
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            // sd of the sample variance is about sqrt(2 / n)
            assert!((var - 1.0).abs() < 3.0 * (2.0 / col.len() as f64).sqrt());
        }
    }

    #[test]
    fn correlated_mode_matches_mixing() {
        let d = gen_synthetic(&SynthSpec::correlated(100_000), &mut seeded(4)).unwrap();
        let (a, b): (Vec<f64>, Vec<f64>) = d.x().row_iter().map(|r| (r[0], r[1])).unzip();
        let (ma, _) = mean_se(&a);
        let (mb, _) = mean_se(&b);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let rho = cov / (va * vb).sqrt();
        // A^T A = [[10, 14], [14, 20]]
        let exact = 14.0 / 200f64.sqrt();
        assert!((rho - exact).abs() < 0.002, "{rho}");
        assert!((rho - 0.98).abs() <= 0.01, "{rho}");
    }

    #[test]
    fn fixed_seed_reproduces() {
        let spec = SynthSpec::correlated(50);
        assert_eq!(gen_synthetic(&spec, &mut seeded(9)).unwrap(), gen_synthetic(&spec, &mut seeded(9)).unwrap());
    }

    #[test]
    fn singular_mixing_is_rejected() {
        let spec = SynthSpec {
            covariates: CovariateMode::Correlated { a: vec![vec![1.0, 2.0], vec![2.0, 4.0]] },
            ..SynthSpec::default()
        };
        assert!(matches!(gen_synthetic(&spec, &mut seeded(1)), Err(Error::Singular(_))));
    }
}
