//! Declarative pipeline configuration (TOML).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use metapmp::meta::MetaModelConfig;
use metapmp::mixture::{MixtureMode, DEFAULT_MOMENT_DRAWS};
use metapmp::models::{
    BetaBernoulliModel, Compartments, DesignSampler, EpidemicModel, GenerativeModel, HalfNormalPrior,
    NigRegressionModel, ObservationModel,
};
use metapmp::rng::derive_seed;
use metapmp::{ModelSet, PmpVector};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

pub const SCHEMA_VERSION: u32 = 1;

/// Sum tolerance for observed PMPs typed by hand, e.g. values rounded to
/// two decimals.
pub const OBSERVED_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Number of level-2 simulations `K`.
    #[serde(default)]
    pub k: usize,
    /// Observations per simulated data set `N`.
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub stratified: bool,
    /// Prior model probabilities; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub meta: MetaModelConfig,
    #[serde(default)]
    pub mixture: MixtureConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            k: 0,
            n: 0,
            stratified: false,
            prior: None,
            out: default_out(),
            models: Vec::new(),
            meta: MetaModelConfig::default(),
            mixture: MixtureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureConfig {
    pub mode: MixtureMode,
    /// Cluster count `C` in embedded mode.
    pub clusters: usize,
    pub grid_resolution: usize,
    pub moment_draws: usize,
    /// Observed PMPs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<Vec<f64>>,
    /// Observed data file; PMPs are computed from it with the model set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            mode: MixtureMode::Full,
            clusters: 3,
            grid_resolution: 200,
            moment_draws: DEFAULT_MOMENT_DRAWS,
            observed: None,
            data: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    BetaBernoulli {
        name: String,
        alpha: f64,
        beta: f64,
    },
    NigRegression {
        name: String,
        a0: f64,
        b0: f64,
        mu0: Vec<f64>,
        /// Prior precision, row by row.
        lambda0: Vec<Vec<f64>>,
        /// 0-based columns of the shared predictor pool.
        columns: Vec<usize>,
        n_predictors: usize,
        #[serde(default = "one")]
        design_scale: f64,
    },
    Epidemic {
        name: String,
        compartments: Compartments,
        likelihood: ObservationModel,
        beta: HalfNormalPrior,
        gamma: HalfNormalPrior,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<HalfNormalPrior>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<HalfNormalPrior>,
        population: u64,
        #[serde(default = "one_u64")]
        initial_infected: u64,
        #[serde(default = "default_n_is")]
        n_is: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn one_u64() -> u64 {
    1
}

fn default_n_is() -> usize {
    20_000
}

impl ModelSpec {
    pub fn name(&self) -> &str {
        match self {
            ModelSpec::BetaBernoulli { name, .. }
            | ModelSpec::NigRegression { name, .. }
            | ModelSpec::Epidemic { name, .. } => name,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ModelSpec::BetaBernoulli { .. } => "beta_bernoulli",
            ModelSpec::NigRegression { .. } => "nig_regression",
            ModelSpec::Epidemic { .. } => "epidemic",
        }
    }

    fn build(&self, seed: u64) -> Result<Arc<dyn GenerativeModel>, ConfigError> {
        let err = |e: metapmp::models::ModelError| ConfigError(format!("model {}: {e}", self.name()));
        Ok(match self {
            ModelSpec::BetaBernoulli { name, alpha, beta } => {
                Arc::new(BetaBernoulliModel::new(name.clone(), *alpha, *beta).map_err(err)?)
            }
            ModelSpec::NigRegression {
                name,
                a0,
                b0,
                mu0,
                lambda0,
                columns,
                n_predictors,
                design_scale,
            } => {
                let p = mu0.len();
                if lambda0.len() != p || lambda0.iter().any(|r| r.len() != p) {
                    return Err(ConfigError(format!("model {name}: lambda0 must be {p}x{p}")));
                }
                let lambda = DMatrix::from_fn(p, p, |i, j| lambda0[i][j]);
                Arc::new(
                    NigRegressionModel::new(
                        name.clone(),
                        *a0,
                        *b0,
                        DVector::from_column_slice(mu0),
                        lambda,
                        columns.clone(),
                        DesignSampler {
                            n_predictors: *n_predictors,
                            scale: *design_scale,
                        },
                    )
                    .map_err(err)?,
                )
            }
            ModelSpec::Epidemic {
                name,
                compartments,
                likelihood,
                beta,
                gamma,
                eta,
                phi,
                population,
                initial_infected,
                n_is,
            } => {
                let model = EpidemicModel {
                    name: name.clone(),
                    compartments: *compartments,
                    likelihood: *likelihood,
                    beta: *beta,
                    gamma: *gamma,
                    eta: *eta,
                    phi: *phi,
                    population: *population,
                    initial_infected: *initial_infected,
                    n_is: *n_is,
                    is_seed: derive_seed(seed, "importance-sampling"),
                };
                model.validate().map_err(err)?;
                Arc::new(model)
            }
        })
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    /// Checks everything that does not depend on the subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.meta.validate().map_err(|e| ConfigError(e.to_string()))?;
        let m = &self.mixture;
        if m.clusters == 0 {
            return Err(ConfigError("mixture.clusters must be at least 1".into()));
        }
        if m.grid_resolution == 0 {
            return Err(ConfigError("mixture.grid_resolution must be at least 1".into()));
        }
        if m.moment_draws < 2 {
            return Err(ConfigError("mixture.moment_draws must be at least 2".into()));
        }
        if let Some(obs) = &m.observed {
            parse_observed(obs)?;
        }
        if !self.models.is_empty() {
            self.model_set()?;
        }
        Ok(())
    }

    /// Checks the settings needed for level-2 simulation.
    pub fn validate_simulation(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError("k must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(ConfigError("n must be at least 1".into()));
        }
        if self.models.len() < 2 {
            return Err(ConfigError("at least two models are required".into()));
        }
        self.model_set().map(|_| ())
    }

    pub fn model_set(&self) -> Result<ModelSet, ConfigError> {
        if let Some(first) = self.models.first() {
            if let Some(other) = self.models.iter().find(|m| m.kind() != first.kind()) {
                return Err(ConfigError(format!(
                    "models {} and {} score different kinds of data",
                    first.name(),
                    other.name()
                )));
            }
        }
        let pools: Vec<(usize, f64)> = self
            .models
            .iter()
            .filter_map(|m| match m {
                ModelSpec::NigRegression {
                    n_predictors,
                    design_scale,
                    ..
                } => Some((*n_predictors, *design_scale)),
                _ => None,
            })
            .collect();
        if pools.windows(2).any(|w| w[0] != w[1]) {
            return Err(ConfigError(
                "regression models must share n_predictors and design_scale".into(),
            ));
        }
        let models = self
            .models
            .iter()
            .map(|m| m.build(self.seed))
            .collect::<Result<Vec<_>, _>>()?;
        let result = match &self.prior {
            None => ModelSet::new(models),
            Some(p) => {
                let prior = PmpVector::new(p.clone()).map_err(|e| ConfigError(format!("prior: {e}")))?;
                ModelSet::with_prior(models, prior)
            }
        };
        result.map_err(|e| ConfigError(e.to_string()))
    }
}

/// Validates observed PMPs, renormalizing sums within
/// [`OBSERVED_TOLERANCE`].
pub fn parse_observed(values: &[f64]) -> Result<PmpVector, ConfigError> {
    PmpVector::with_tolerance(values.to_vec(), OBSERVED_TOLERANCE)
        .map_err(|e| ConfigError(format!("observed PMPs: {e}")))
}

/// Parses `0.05,0.91,0.03`.
pub fn parse_observed_str(text: &str) -> Result<PmpVector, ConfigError> {
    let values = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| ConfigError(format!("observed PMPs: `{v}`: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    parse_observed(&values)
}
