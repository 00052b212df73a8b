use std::path::PathBuf;

use crate::classifiers::LogisticModel;
use crate::solver::{PrecisionSet, SolveDiagnostics};

pub type Result<T> = std::result::Result<T, Error>;

/// Last iterate of a solver that ran out of iterations.
#[derive(Debug, Clone)]
pub enum PartialFit {
    GroupLasso {
        thetas: PrecisionSet,
        diagnostics: SolveDiagnostics,
    },
    Logistic {
        model: LogisticModel,
        gradient_norm: f64,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no convergence after {iterations} iterations")]
    MaxIterationsExceeded {
        iterations: usize,
        partial: Box<PartialFit>,
    },

    #[error("transform collapsed column {column} to a constant")]
    DegenerateTransform { column: usize },

    #[error("every candidate failed on at least one fold")]
    AllCandidatesFailed,

    #[error("block {block}: {source}")]
    InBlock {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("community {community}: {source}")]
    InCommunity {
        community: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn not_pd(msg: impl Into<String>) -> Self {
        Error::NotPositiveDefinite(msg.into())
    }

    /// Strips block/community annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::InBlock { source, .. } | Error::InCommunity { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical kind (as opposed to bad input or IO).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NotPositiveDefinite(_)
                | Error::MaxIterationsExceeded { .. }
                | Error::DegenerateTransform { .. }
                | Error::AllCandidatesFailed
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self.root(), Error::Io { .. })
    }
}
