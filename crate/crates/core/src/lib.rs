//! Obsolescence-case classification pipeline for tabular component data.
//!
//! The pipeline turns a labeled case table into a compact decision model in
//! four stages, every one of them seeded and deterministic:
//!
//! 1. **Normalization** ([`preprocess::BinaryNormalizer`]) rescales binary
//!    columns to mean 1 and population standard deviation 4.
//! 2. **Correlation elimination** ([`preprocess::backward_eliminate`])
//!    removes features pairwise until no surviving pair correlates beyond
//!    the threshold alpha.
//! 3. **Projection** ([`pca::PcaModel`]) keeps the top principal components
//!    of the surviving features using an in-crate Jacobi eigensolver.
//! 4. **Classification** ([`tree::Tree`]) fits a Gini-impurity decision
//!    tree on the component scores.
//!
//! [`evaluate`] wraps the stages into seeded trials, repeated shuffled
//! evaluation with five summary statistics, a budgeted grid search over
//! (alpha, component count), and frozen-statistics scoring of a monitoring
//! hold-out. [`analysis`] propagates tree importances back to original
//! features, compares rankings against an expert ordering, and emits
//! report and plot files. [`dataset`] handles CSV/schema I/O and synthetic
//! data generation.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod manifest;
pub mod pca;
pub mod preprocess;
pub mod tree;

pub use error::{Error, Result};
