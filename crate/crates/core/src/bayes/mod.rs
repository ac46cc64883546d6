//! Bayesian predictive models: conjugate posteriors, posterior sampling
//! backends and likelihood gradients with respect to the covariates.

mod backend;
mod conjugate;
mod dataset;
mod draw;
mod mcmc;
mod model;

pub use backend::{
    ConjugatePosterior, LikelihoodDraw, PosteriorBackend, PosteriorPredictive, Predictor,
};
pub use conjugate::{
    gaussian_update, nig_update, ppd_normal_params, ppd_t_params, GaussianPosterior, NigParams,
    NigPosterior, NigPrior, NormalPredictive, TPredictive,
};
pub use dataset::{load_dataset, Dataset, Standardizer};
pub use draw::ParamDraw;
pub use mcmc::{ChainRun, Dispersion, McmcChain, ParamPrior, RwmSettings};
pub use model::{BnnArch, BnnHead, PredictiveModel};
pub(crate) use model::class_index;
