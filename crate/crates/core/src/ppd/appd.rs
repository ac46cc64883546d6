use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Adversarial target for the posterior predictive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Appd {
    Normal { mean: f64, variance: f64 },
    Categorical { probs: Vec<f64> },
    /// `loc + sqrt(scale) * T_df`; `scale` is the squared scale.
    StudentT { df: f64, loc: f64, scale: f64 },
}

impl Appd {
    pub fn validate(&self) -> Result<()> {
        match self {
            Appd::Normal { mean, variance } => {
                if !(*variance > 0.0) || !mean.is_finite() {
                    return Err(Error::InvalidParameter(format!("normal target needs variance > 0, got {variance}")));
                }
            }
            Appd::Categorical { probs } => {
                let total: f64 = probs.iter().sum();
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter("categorical target must be a probability vector".into()));
                }
            }
            Appd::StudentT { df, scale, loc } => {
                if !(*df > 0.0) || !(*scale > 0.0) || !loc.is_finite() {
                    return Err(Error::InvalidParameter("student-t target needs df > 0 and scale > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Appd::Normal { mean, variance } => Normal::new(*mean, variance.sqrt()).expect("validated").sample(rng),
            Appd::Categorical { probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k as f64;
                    }
                }
                probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as f64
            }
            Appd::StudentT { df, loc, scale } => {
                let t: f64 = if df.is_infinite() {
                    rng.sample(StandardNormal)
                } else {
                    StudentT::new(*df).expect("validated").sample(rng)
                };
                loc + scale.sqrt() * t
            }
        }
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        match self {
            Appd::Normal { mean, variance } => {
                -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - (y - mean).powi(2) / (2.0 * variance)
            }
            Appd::Categorical { probs } => {
                if y >= 0.0 && y.fract() == 0.0 && (y as usize) < probs.len() {
                    probs[y as usize].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Appd::StudentT { df, loc, scale } => {
                let nu = *df;
                let z2 = (y - loc).powi(2) / scale;
                ln_gamma((nu + 1.0) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - 0.5 * (nu * std::f64::consts::PI * scale).ln()
                    - (nu + 1.0) / 2.0 * (1.0 + z2 / nu).ln()
            }
        }
    }

    /// Differential (or discrete) entropy in nats.
    pub fn entropy(&self) -> f64 {
        match self {
            Appd::Normal { variance, .. } => 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * variance).ln(),
            Appd::Categorical { probs } => crate::stats::entropy(probs),
            Appd::StudentT { df, scale, .. } => {
                let nu = *df;
                (nu + 1.0) / 2.0 * (digamma((nu + 1.0) / 2.0) - digamma(nu / 2.0))
                    + (nu.sqrt()).ln()
                    + ln_beta(nu / 2.0, 0.5)
                    + 0.5 * scale.ln()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn validation() {
        assert!(Appd::Normal { mean: 0.0, variance: 0.0 }.validate().is_err());
        assert!(Appd::Categorical { probs: vec![0.5, 0.6] }.validate().is_err());
        assert!(Appd::Categorical { probs: vec![0.25; 4] }.validate().is_ok());
        assert!(Appd::StudentT { df: 3.0, loc: 0.0, scale: -1.0 }.validate().is_err());
    }

    #[test]
    fn entropy_matches_monte_carlo() {
        let mut rng = seeded(12);
        for appd in [
            Appd::Normal { mean: 1.0, variance: 2.5 },
            Appd::StudentT { df: 5.0, loc: -1.0, scale: 0.7 },
            Appd::Categorical { probs: vec![0.2, 0.5, 0.3] },
        ] {
            let n = 200_000;
            let vals: Vec<f64> = (0..n).map(|_| -appd.log_pdf(appd.sample(&mut rng))).collect();
            let (m, se) = crate::stats::mean_se(&vals);
            assert!((m - appd.entropy()).abs() < 4.0 * se, "{appd:?}: {m} vs {}", appd.entropy());
        }
    }
}
