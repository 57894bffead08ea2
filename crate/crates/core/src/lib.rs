//! Covariate-shift representation invariance criterion (CRIC).
//!
//! Given predictors trained on several environments, CRIC compares how far
//! importance-reweighted cross-environment mean predictions drift from the
//! within-environment means, relative to the same drift for a pooled ERM
//! baseline. Values below one indicate a more invariant representation.
//!
//! Modules:
//! - [`data`]: multi-environment datasets, CSV I/O, per-environment splits
//! - [`sem`]: the linear structural-equation benchmark generator
//! - [`ratio`]: likelihood-ratio models (logistic classifier, Gaussian)
//! - [`learners`]: ERM, IRMv1 and V-REx trainers
//! - [`criterion`]: the criterion and its intermediate statistics
//! - [`experiment`]: the replicated benchmark and file-based evaluation

pub mod criterion;
pub mod data;
pub mod error;
pub mod experiment;
pub mod learners;
pub mod ratio;
pub mod rng;
pub mod sem;

pub use crate::criterion::{cric, integrated_criterion, q_hat_cross, q_hat_self, CricOptions, CricReport, PairStatistic};
pub use crate::data::{load_csv, split_per_env, write_csv, EnvDataset, EnvironmentId, MultiEnvDataset};
pub use crate::error::{CricError, Result};
pub use crate::experiment::{emit_results, evaluate, run_experiment, ExperimentConfig, ExperimentResult};
pub use crate::learners::{
    irmv1_penalty, risk, train, train_erm, train_irmv1, train_vrex, vrex_penalty, Method, Predictor,
    PredictorKind, TrainConfig,
};
pub use crate::ratio::{
    exact_gaussian_ratio, fit_pair_classifier, ratio_diagnostics, ClassifierConfig, GaussianParams,
    PairClassifier, RatioMode, RatioModel,
};
pub use crate::sem::{generate_sem, SemConfig, Setting};
