//! Metric learning for sets of symmetric-matrix features where the
//! similarity threshold is learned jointly with the metric.
//!
//! The metric is a list of positive-definite matrices, one per feature view.
//! Training runs cyclic or randomised Bregman projections onto the pairwise
//! half-space constraints, each solved through a one-dimensional secular
//! equation. Everything is generic over the scalar type; `f64` and `f32`
//! aliases are provided below.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod descriptors;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod metric;
pub mod scalar;
pub mod solver;
pub mod threshold;

pub use constraints::{
    build_constraints, constraint_value, feasibility_residual, is_feasible, ConstraintKind,
    ConstraintPair, ConstraintSet, LabeledDataset,
};
pub use descriptors::{
    covariance_descriptor, default_epsilon, descriptor_features, gen_synthetic_dataset,
    gen_synthetic_raw, matrix_exp_sym, matrix_log, RawExample, SynthConfig,
};
pub use error::{Error, Result};
pub use evaluation::{
    accuracy, cross_validate_c, hyperparameter_sweep, knn_predict, run_experiment,
    ExperimentConfig, ExperimentReport, Method, SweepReport,
};
pub use linalg::{sym_eigendecompose, SymEigen};
pub use metric::{distance, logdet_divergence, quadratic_divergence, FeatureSet, MetricParams, Profile};
pub use scalar::Real;
pub use solver::{
    fit, fit_with_observer, FitDiagnostics, FitResult, IterRecord, Mode, Schedule, SolverConfig,
    SolverState,
};
pub use threshold::{derive_params, gamma_vector, GramOperator, ThresholdConfig, ThresholdDerived};

pub type FeatureSet64 = FeatureSet<f64>;
pub type MetricParams64 = MetricParams<f64>;
pub type LabeledDataset64 = LabeledDataset<f64>;
pub type ConstraintSet64 = ConstraintSet<f64>;
pub type ThresholdDerived64 = ThresholdDerived<f64>;
pub type FitResult64 = FitResult<f64>;

pub type FeatureSet32 = FeatureSet<f32>;
pub type MetricParams32 = MetricParams<f32>;
pub type LabeledDataset32 = LabeledDataset<f32>;
pub type ConstraintSet32 = ConstraintSet<f32>;
pub type ThresholdDerived32 = ThresholdDerived<f32>;
pub type FitResult32 = FitResult<f32>;
