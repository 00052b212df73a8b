//! Sparse quadratic discriminant analysis and Community Bayes.
//!
//! The core estimator maximizes the joint penalized Gaussian log-likelihood
//! of `K` class precision matrices under a group lasso penalty on each
//! off-diagonal position, solved by ADMM after exact covariance-thresholding
//! screening. Community Bayes partitions features into communities from
//! rank-based correlation estimates and combines per-community posteriors.

pub mod classifiers;
pub mod community;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model_selection;
pub mod numerics;
pub mod screening;
pub mod solver;

#[cfg(test)]
mod testutil;

pub use classifiers::{Classifier, FittedModel};
pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use numerics::SymMatrix;
pub use screening::FeaturePartition;
pub use solver::{AdmmConfig, PrecisionSet};
