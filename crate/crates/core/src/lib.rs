//! Global and local low-rank matrix approximation for partially observed
//! rating matrices.
//!
//! The global model fits one regularized factorization `U V^T` to the
//! observed entries. The local model fits one kernel-weighted factorization
//! around each of `q` anchor entries and blends them with Nadaraya-Watson
//! weights computed from a product of row and column smoothing kernels.
//! Dense nuclear-norm solvers cover the convex formulation at small sizes.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod io;
pub mod kernel;
pub mod local;
pub mod nuclear;
mod solver;
pub mod synthetic;

pub use data::{
    parse_ratings, project_observed, split_train_test, write_ratings, IdMap, ObservedMatrix,
    Rating, RatingFormat, RatingScale,
};
pub use ensemble::{EnsembleModel, Metrics, MetricsRecord, PredictionSource};
pub use error::{LrmaError, Result};
pub use experiment::{
    run_experiment, ExperimentConfig, ModelKind, ModelSettings, Pipeline, SeriesRow, SolverTag,
};
pub use factor::{
    objective_and_gradient, predict_entry, rmse, train_global, FactorPair, Solver, TrainConfig,
};
pub use kernel::{
    anchor_weight_vectors, arccos_distance, epanechnikov, product_kernel, DistanceModel,
    KernelConfig, KernelKind,
};
pub use local::{
    sample_anchors, train_local, train_local_models, weighted_objective_and_gradient, Anchor,
    LocalModel,
};
pub use nuclear::{nuclear_norm, svt_complete, svt_local, SvtConfig, SvtReport};
pub use solver::FitReport;
