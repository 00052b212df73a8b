//! Gaussian discriminant classifiers (QDA, naive Bayes, DRDA, SQDA) and
//! multinomial logistic regression.

mod gaussian;
mod logistic;

pub use gaussian::{
    discriminant_scores, fit_drda, fit_drda_moments, fit_moments, fit_naive_bayes, fit_qda, fit_sqda,
    fit_sqda_detailed, standardized_tuning, GaussianClassModel, ModelKind, Moments, SqdaFit,
    SqdaPath,
};
pub use logistic::{
    fit_logistic_regression, logistic_log_posterior, LogisticConfig, LogisticModel,
    LogisticObjective,
};

use serde::{Deserialize, Serialize};

use crate::community::CommunityModel;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// A fitted model that scores one observation at a time.
pub trait Classifier {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;

    /// Normalized log posterior class probabilities.
    fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.log_posterior(x)?))
    }

    /// Most probable class; ties go to the smallest index.
    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.log_posterior(x)?))
    }

    fn predict_dataset(&self, d: &LabeledDataset) -> Result<Vec<usize>> {
        d.rows().map(|r| self.predict(r)).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "observation has {} features, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        Ok(())
    }
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `log Σ exp(v)` with max subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| x - lse).collect()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Any model the library can fit, tagged for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedModel {
    Gaussian(GaussianClassModel),
    Logistic(LogisticModel),
    Community(CommunityModel),
}

impl FittedModel {
    /// Re-checks invariants after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            FittedModel::Gaussian(m) => m.validate(),
            FittedModel::Logistic(m) => m.validate(),
            FittedModel::Community(m) => m.validate(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

impl Classifier for FittedModel {
    fn n_features(&self) -> usize {
        match self {
            FittedModel::Gaussian(m) => m.n_features(),
            FittedModel::Logistic(m) => m.n_features(),
            FittedModel::Community(m) => m.n_features(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            FittedModel::Gaussian(m) => m.n_classes(),
            FittedModel::Logistic(m) => m.n_classes(),
            FittedModel::Community(m) => m.n_classes(),
        }
    }

    fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FittedModel::Gaussian(m) => m.log_posterior(x),
            FittedModel::Logistic(m) => m.log_posterior(x),
            FittedModel::Community(m) => m.log_posterior(x),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            FittedModel::Gaussian(m) => m.predict(x),
            FittedModel::Logistic(m) => m.predict(x),
            FittedModel::Community(m) => m.predict(x),
        }
    }
}

impl From<GaussianClassModel> for FittedModel {
    fn from(m: GaussianClassModel) -> Self {
        FittedModel::Gaussian(m)
    }
}

impl From<LogisticModel> for FittedModel {
    fn from(m: LogisticModel) -> Self {
        FittedModel::Logistic(m)
    }
}

impl From<CommunityModel> for FittedModel {
    fn from(m: CommunityModel) -> Self {
        FittedModel::Community(m)
    }
}
