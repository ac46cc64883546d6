use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Appd;
use crate::bayes::{LikelihoodDraw, PosteriorPredictive};
use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::linalg::Vector;
use crate::point::SgdSettings;
use crate::rng::SimRng;

/// Floor on the rescaled denominator after factoring out the largest
/// likelihood.
const DENOMINATOR_FLOOR: f64 = 1e-300;

/// Distribution of the randomly selected level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelLaw {
    /// `w_l ∝ 2^{-tau l}` on `0..=l_max`, renormalised.
    Truncated,
    /// `w_l = (1 - 2^{-tau}) 2^{-tau l}` on all `l >= 0`.
    Geometric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcConfig {
    /// Base sample count `M0`; level `l` uses `M0 * 2^l` posterior draws.
    pub m0: usize,
    pub tau: f64,
    /// Levels sampled per `y`.
    pub r: usize,
    pub l_max: usize,
    pub level_law: LevelLaw,
    /// `y` draws from the target per iteration.
    pub b: usize,
    pub sgd: SgdSettings,
    pub feasible: FeasibleSet,
    /// Posterior draws used for the per-iteration objective estimate.
    pub objective_draws: usize,
    /// Target draws used for the per-iteration objective estimate.
    pub objective_y_draws: usize,
    /// Largest level size allowed under the geometric law.
    pub max_level_draws: usize,
}

impl MlmcConfig {
    pub fn new(feasible: FeasibleSet, sgd: SgdSettings) -> Self {
        Self {
            m0: 8,
            tau: 1.5,
            r: 1,
            l_max: 6,
            level_law: LevelLaw::Truncated,
            b: 1,
            sgd,
            feasible,
            objective_draws: 64,
            objective_y_draws: 8,
            max_level_draws: 1 << 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m0 == 0 || self.r == 0 || self.b == 0 {
            return Err(Error::InvalidParameter("M0, R and B must be at least 1".into()));
        }
        if !(self.tau > 1.0) {
            return Err(Error::InvalidParameter(format!("tau must exceed 1, got {}", self.tau)));
        }
        if self.objective_draws == 0 || self.objective_y_draws == 0 {
            return Err(Error::InvalidParameter("objective estimate needs at least one draw".into()));
        }
        self.sgd.validate()
    }

    pub fn level_draws(&self, level: usize) -> Result<usize> {
        let size = 1usize
            .checked_shl(level as u32)
            .and_then(|s| s.checked_mul(self.m0))
            .filter(|&s| s <= self.max_level_draws);
        size.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "level {level} needs more than {} posterior draws",
                self.max_level_draws
            ))
        })
    }

    /// Selection probability of `level`.
    pub fn level_weight(&self, level: usize) -> f64 {
        let q = 2f64.powf(-self.tau);
        match self.level_law {
            LevelLaw::Truncated => {
                if level > self.l_max {
                    return 0.0;
                }
                let norm: f64 = (0..=self.l_max).map(|l| q.powi(l as i32)).sum();
                q.powi(level as i32) / norm
            }
            LevelLaw::Geometric => (1.0 - q) * q.powi(level as i32),
        }
    }

    pub fn sample_level<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self.level_law {
            LevelLaw::Truncated => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for l in 0..=self.l_max {
                    acc += self.level_weight(l);
                    if u < acc {
                        return l;
                    }
                }
                self.l_max
            }
            LevelLaw::Geometric => {
                // P(l) = (1 - q) q^l by inversion
                let q = 2f64.powf(-self.tau);
                let u: f64 = 1.0 - rng.gen::<f64>();
                (u.ln() / q.ln()).floor() as usize
            }
        }
    }
}

fn ratio_from(y: f64, logliks: &[f64], scores: &[Vector]) -> Result<Vector> {
    let max = logliks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || logliks.iter().any(|l| l.is_nan()) {
        return Err(Error::DegenerateLikelihood(y));
    }
    let mut denom = 0.0;
    let mut numer = Vector::zeros(scores[0].len());
    for (l, s) in logliks.iter().zip(scores) {
        let w = (l - max).exp();
        denom += w;
        numer.axpy(w, s, 1.0);
    }
    let m = logliks.len() as f64;
    if denom / m < DENOMINATOR_FLOOR {
        return Err(Error::DegenerateLikelihood(y));
    }
    Ok(-numer / denom)
}

fn evaluate(x: &Vector, y: f64, draws: &[LikelihoodDraw<'_>]) -> Result<(Vec<f64>, Vec<Vector>)> {
    let mut logliks = Vec::with_capacity(draws.len());
    let mut scores = Vec::with_capacity(draws.len());
    for d in draws {
        logliks.push(d.loglik(x, y)?);
        scores.push(d.score_x(x, y)?);
    }
    Ok((logliks, scores))
}

/// `g_{x',M}(y) = -(mean_m grad pi(y|x',gamma_m)) / (mean_m pi(y|x',gamma_m))`,
/// evaluated on the log scale with the largest likelihood factored out.
pub fn ratio_grad(x: &Vector, y: f64, draws: &[LikelihoodDraw<'_>]) -> Result<Vector> {
    if draws.is_empty() {
        return Err(Error::InvalidParameter("ratio estimator needs at least one draw".into()));
    }
    let (logliks, scores) = evaluate(x, y, draws)?;
    ratio_from(y, &logliks, &scores)
}

/// Antithetic level difference `Delta g_{x',l}(y)`. Level 0 is the plain
/// ratio on `M0` draws; level `l > 0` subtracts the average of the ratios on
/// the first and second halves of the same `M0 2^l` draws.
pub fn delta_level(
    x: &Vector,
    y: f64,
    level: usize,
    config: &MlmcConfig,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<Vector> {
    let size = config.level_draws(level)?;
    let draws = source.draw(size, rng)?;
    let (logliks, scores) = evaluate(x, y, &draws)?;
    let full = ratio_from(y, &logliks, &scores)?;
    if level == 0 {
        return Ok(full);
    }
    let half = size / 2;
    let a = ratio_from(y, &logliks[..half], &scores[..half])?;
    let b = ratio_from(y, &logliks[half..], &scores[half..])?;
    Ok(full - (a + b) * 0.5)
}

#[derive(Debug, Clone)]
pub struct MlmcEstimate {
    pub grad: Vector,
    pub levels: Vec<usize>,
    /// Posterior draws consumed.
    pub samples: usize,
}

/// Randomized-level MLMC estimate of the gradient of
/// `-E_{pi_A}[log pi(y | x', D)]`.
pub fn mlmc_grad(
    x: &Vector,
    appd: &Appd,
    config: &MlmcConfig,
    source: &dyn PosteriorPredictive,
    rng: &mut SimRng,
) -> Result<MlmcEstimate> {
    let mut grad = Vector::zeros(x.len());
    let mut levels = Vec::with_capacity(config.b * config.r);
    let mut samples = 0;
    for _ in 0..config.b {
        let y = appd.sample(rng);
        for _ in 0..config.r {
            let level = config.sample_level(rng);
            let delta = delta_level(x, y, level, config, source, rng)?;
            grad.axpy(1.0 / config.level_weight(level), &delta, 1.0);
            samples += config.level_draws(level)?;
            levels.push(level);
        }
    }
    grad /= (config.b * config.r) as f64;
    Ok(MlmcEstimate { grad, levels, samples })
}

/// Expected posterior draws per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCost {
    /// `R B M0 (1 - 2^{-tau}) / (1 - 2^{-(tau - 1)})` for the untruncated law.
    pub untruncated: f64,
    /// `R B sum_l w_l M_l` for the configured law.
    pub configured: f64,
}

pub fn expected_samples_per_iter(config: &MlmcConfig) -> Result<SampleCost> {
    if !(config.tau > 1.0) {
        return Err(Error::DivergentCost(config.tau));
    }
    let rb = (config.r * config.b) as f64;
    let m0 = config.m0 as f64;
    let untruncated = rb * m0 * (1.0 - 2f64.powf(-config.tau)) / (1.0 - 2f64.powf(-(config.tau - 1.0)));
    let configured = match config.level_law {
        LevelLaw::Truncated => {
            rb * (0..=config.l_max)
                .map(|l| config.level_weight(l) * m0 * 2f64.powi(l as i32))
                .sum::<f64>()
        }
        LevelLaw::Geometric => untruncated,
    };
    Ok(SampleCost { untruncated, configured })
}
