//! Sequential early stopping for iterative estimation procedures.
//!
//! Five estimators share one iterate-once contract ([`estimator::IterativeEstimator`]):
//! every iteration is computed at most once, and stopping rules only advance the
//! path as far as they need to decide.
//!
//! - [`truncated_svd::TruncatedSvd`]: spectral cut-off with on-demand singular triplets
//! - [`landweber::Landweber`]: gradient descent on the least-squares objective
//! - [`conjugate_gradients::ConjugateGradients`]: CG for the normal equation
//! - [`l2_boost::L2Boost`]: orthogonal matching pursuit in high-dimensional linear models
//! - [`regression_tree::RegressionTree`]: breadth-first CART
//!
//! When the true signal (and noise level) is supplied, every estimator also tracks its
//! oracle quantities, so data-driven stopping times can be compared against balanced
//! and classical oracles. [`simulation`] runs seeded Monte-Carlo studies on top.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conjugate_gradients;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod l2_boost;
pub mod landweber;
pub mod linalg;
pub mod regression_tree;
pub mod simulation;
pub mod truncated_svd;

pub use conjugate_gradients::ConjugateGradients;
pub use datagen::{InverseProblemInstance, RegressionInstance};
pub use error::{Error, Result};
pub use estimator::{IterateLog, IterativeEstimator, OracleTrack, PathStorage, StopIndex};
pub use l2_boost::L2Boost;
pub use landweber::Landweber;
pub use linalg::{DenseMatrix, DesignMatrix, SvdTriplet};
pub use regression_tree::RegressionTree;
pub use truncated_svd::TruncatedSvd;
