//! Meta-uncertainty for Bayesian model comparison.
//!
//! The crate turns a set of generative candidate models into
//!
//! 1. model-implied distributions of posterior model probabilities (PMPs),
//!    obtained by simulating data sets from each model and scoring them with
//!    every model's marginal likelihood ([`engine`]);
//! 2. Bayesian meta-models on the probability simplex fitted to those PMPs
//!    ([`meta`]);
//! 3. a predictive mixture that weights the meta-models' posterior
//!    predictive densities by the PMPs observed on real data ([`mixture`]).

pub mod engine;
pub mod grid;
pub mod meta;
pub mod mixture;
pub mod models;
pub mod numeric;
pub mod rng;
pub mod simplex;

pub use engine::{
    compute_pmps, group_by_true_model, run_level2, Allocation, EngineError, LabeledPmpSample,
    ModelSet, PmpGroups,
};
pub use grid::{barycentric_grid, SimplexDensityGrid, SimplexLattice};
pub use meta::{
    cluster_embedding, fit, mean_embedding, Embedding, Family, MetaError, MetaModelConfig,
    MetaParams, MetaPosterior,
};
pub use mixture::{build_mixture, MixtureError, MixtureMode, MixtureSummary, PredictiveMixture};
pub use simplex::{
    alr, alr_inv, clamp_to_interior, dirichlet_logpdf, dirichlet_mean, logistic_normal_logpdf,
    normalize_from_log, DirichletParams, InteriorPmpVector, LogisticNormalParams, PmpVector,
    DEFAULT_EPSILON,
};
