//! Experiment drivers behind the CLI: configuration, data, sweeps and the
//! validation suites.

pub mod config;
pub mod defender;
pub mod entropy;
pub mod gradcheck;
pub mod graybox;
pub mod sep;
pub mod sparsity;
pub mod synth;

pub use crate::bayes::load_dataset;
pub use config::{AttackKind, AttackSpec, ExperimentConfig, ModelSpec, Strategy};
pub use defender::Defender;
pub use entropy::{entropy_experiment, EntropyOutcome, EntropySpec};
pub use gradcheck::{validate_gradients, GradCheckReport, GradCheckSpec};
pub use sep::{attack_trace, run_sep, Metric, SepRecord, SepSummary, SepTable};
pub use synth::{gen_synthetic, CovariateMode, SynthSpec};
pub use graybox::{graybox_experiment, GrayboxSpec, MemberSpec};
pub use sparsity::{sparsity_experiment, SparsityRun, SparsitySpec};
