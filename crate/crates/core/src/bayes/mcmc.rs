//! Adaptive random-walk Metropolis.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, ParamDraw, PredictiveModel};
use crate::error::{Error, Result};
use crate::linalg::Vector;

pub type LogDensity = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwmSettings {
    pub burn_in: usize,
    pub thin: usize,
    pub initial_step: f64,
    pub target_accept: f64,
}

impl Default for RwmSettings {
    fn default() -> Self {
        Self {
            burn_in: 2_000,
            thin: 5,
            initial_step: 0.1,
            target_accept: 0.3,
        }
    }
}

/// How the chain state maps to the dispersion of a `ParamDraw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dispersion {
    Fixed(f64),
    /// Last state coordinate is `log(phi)`.
    LogLast,
}

/// Independent Gaussian prior on network weights, with an optional
/// Gamma(shape, rate) prior on the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPrior {
    pub weight_sd: f64,
    pub noise_gamma: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub draws: Vec<ParamDraw>,
    pub acceptance_rate: f64,
    pub step: f64,
}

/// Posterior sampler defined by an unnormalised log density over a flat state.
#[derive(Clone)]
pub struct McmcChain {
    log_density: LogDensity,
    init: Vector,
    dispersion: Dispersion,
    settings: RwmSettings,
}

impl fmt::Debug for McmcChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("McmcChain")
            .field("dim", &self.init.len())
            .field("dispersion", &self.dispersion)
            .field("settings", &self.settings)
            .finish()
    }
}

impl McmcChain {
    pub fn new(log_density: LogDensity, init: Vector, dispersion: Dispersion, settings: RwmSettings) -> Result<Self> {
        if settings.thin == 0 {
            return Err(Error::InvalidParameter("thinning must be at least 1".into()));
        }
        if !(settings.initial_step > 0.0) {
            return Err(Error::InvalidParameter("initial step must be positive".into()));
        }
        if !(log_density)(&init).is_finite() {
            return Err(Error::InvalidParameter("log density is not finite at the initial state".into()));
        }
        Ok(Self {
            log_density,
            init,
            dispersion,
            settings,
        })
    }

    /// Chain targeting `prod_i pi(y_i | x_i, gamma) * prior(gamma)` for `model`.
    pub fn for_model(
        model: PredictiveModel,
        data: Arc<Dataset>,
        prior: ParamPrior,
        settings: RwmSettings,
    ) -> Result<Self> {
        let dim = model.param_dim();
        let (dispersion, state_dim) = match (model.has_dispersion(), prior.noise_gamma) {
            (true, Some(_)) => (Dispersion::LogLast, dim + 1),
            (true, None) => (Dispersion::Fixed(1.0), dim),
            (false, _) => (Dispersion::Fixed(1.0), dim),
        };
        let sd2 = prior.weight_sd * prior.weight_sd;
        let density: LogDensity = Arc::new(move |state: &Vector| {
            let draw = state_to_draw(state, dim, dispersion);
            let mut lp = -0.5 * draw.beta.norm_squared() / sd2;
            if let (Dispersion::LogLast, Some((shape, rate))) = (dispersion, prior.noise_gamma) {
                // Gamma prior on phi plus the log-Jacobian of phi = exp(s)
                lp += (shape - 1.0) * draw.phi.ln() - rate * draw.phi + draw.phi.ln();
            }
            match model.dataset_loglik(&data, &draw) {
                Ok(ll) if ll.is_finite() => lp + ll,
                _ => f64::NEG_INFINITY,
            }
        });
        Self::new(density, Vector::zeros(state_dim), dispersion, settings)
    }

    pub fn with_init(mut self, init: Vector) -> Result<Self> {
        if !(self.log_density)(&init).is_finite() {
            return Err(Error::InvalidParameter("log density is not finite at the initial state".into()));
        }
        self.init = init;
        Ok(self)
    }

    pub fn settings(&self) -> &RwmSettings {
        &self.settings
    }

    /// Runs burn-in (with step-size adaptation) followed by `count` thinned
    /// draws. Acceptance outside [0.05, 0.95] after adaptation is logged.
    pub fn run<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> ChainRun {
        let dim = self.init.len();
        let param_dim = match self.dispersion {
            Dispersion::LogLast => dim - 1,
            Dispersion::Fixed(_) => dim,
        };
        let mut state = self.init.clone();
        let mut lp = (self.log_density)(&state);
        let mut log_step = self.settings.initial_step.ln();
        let step = |state: &mut Vector, lp: &mut f64, scale: f64, rng: &mut R| -> bool {
            let proposal = Vector::from_fn(dim, |i, _| state[i] + scale * rng.sample::<f64, _>(StandardNormal));
            let lp_new = (self.log_density)(&proposal);
            let accept = lp_new.is_finite() && rng.gen::<f64>().ln() < lp_new - *lp;
            if accept {
                *state = proposal;
                *lp = lp_new;
            }
            accept
        };
        for t in 0..self.settings.burn_in {
            let accepted = step(&mut state, &mut lp, log_step.exp(), rng);
            let rate = 1.0 / ((t + 1) as f64).powf(0.6);
            log_step += rate * (if accepted { 1.0 } else { 0.0 } - self.settings.target_accept);
        }
        let scale = log_step.exp();
        let mut accepted = 0usize;
        let total = count * self.settings.thin;
        let mut draws = Vec::with_capacity(count);
        for t in 0..total {
            if step(&mut state, &mut lp, scale, rng) {
                accepted += 1;
            }
            if (t + 1) % self.settings.thin == 0 {
                draws.push(state_to_draw(&state, param_dim, self.dispersion));
            }
        }
        let acceptance_rate = accepted as f64 / total.max(1) as f64;
        if total > 0 && !(0.05..=0.95).contains(&acceptance_rate) {
            tracing::warn!(acceptance_rate, step = scale, "random-walk Metropolis acceptance outside [0.05, 0.95]");
        }
        ChainRun {
            draws,
            acceptance_rate,
            step: scale,
        }
    }
}

fn state_to_draw(state: &Vector, param_dim: usize, dispersion: Dispersion) -> ParamDraw {
    let beta = state.rows(0, param_dim).into_owned();
    let phi = match dispersion {
        Dispersion::Fixed(phi) => phi,
        Dispersion::LogLast => state[param_dim].exp(),
    };
    ParamDraw { beta, phi }
}
