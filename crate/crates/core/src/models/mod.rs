//! Generative candidate models.
//!
//! Each model can simulate a data set from its prior predictive distribution
//! and score any data set of its kind by its log marginal likelihood.

mod beta_bernoulli;
mod epidemic;
mod external;
mod nig;

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use thiserror::Error;

pub use beta_bernoulli::{beta_bernoulli_log_marginal, BetaBernoulliModel};
pub use epidemic::{
    boarding_school_models, epidemic_integrate, epidemic_log_marginal, read_daily_counts,
    Compartments, EpidemicModel, HalfNormalPrior, IsEstimate, ObservationModel, Trajectory,
    BOARDING_SCHOOL_IN_BED, BOARDING_SCHOOL_POPULATION,
};
pub use external::{load_external_pmps, read_external_pmps, ExternalError, ExternalPmpSource};
pub use nig::{
    experiment_one_models, nig_log_marginal, nig_posterior_update, DesignSampler, NigPosterior,
    NigRegressionModel,
};

/// Observations of one data set. `n()` is the observation count `N`.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    /// Bernoulli outcomes.
    Binary(Vec<u8>),
    /// A pool of predictor columns shared by all regression models in a set,
    /// plus the response.
    Regression {
        predictors: DMatrix<f64>,
        response: DVector<f64>,
    },
    /// Daily counts.
    Counts(Vec<u64>),
}

impl Dataset {
    pub fn n(&self) -> usize {
        match self {
            Dataset::Binary(y) => y.len(),
            Dataset::Regression { response, .. } => response.len(),
            Dataset::Counts(y) => y.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Dataset::Binary(_) => "binary",
            Dataset::Regression { .. } => "regression",
            Dataset::Counts(_) => "count",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model {model} expects {expected} data, got {found} data")]
    WrongDataKind {
        model: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("observation {index} is {value}, expected 0 or 1")]
    NonBinary { index: usize, value: u8 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("ODE integration failed: {0}")]
    Integration(String),
}

/// A Bayesian model `y ~ p(y | θ, M)`, `θ ~ p(θ | M)`.
pub trait GenerativeModel: Send + Sync + Debug {
    fn name(&self) -> &str;

    /// Draws `θ` from the prior, then `n` observations given `θ`.
    fn simulate(&self, rng: &mut dyn RngCore, n: usize) -> Result<Dataset, ModelError>;

    /// `ln p(y | M)`. Deterministic for a given data set.
    fn log_marginal(&self, data: &Dataset) -> Result<f64, ModelError>;
}

fn wrong_kind(model: &str, expected: &'static str, data: &Dataset) -> ModelError {
    ModelError::WrongDataKind {
        model: model.to_string(),
        expected,
        found: data.kind(),
    }
}
