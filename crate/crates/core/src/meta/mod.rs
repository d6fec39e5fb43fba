//! Bayesian meta-models fitted to groups of level-2 PMPs.
//!
//! A meta-model is a Dirichlet or logistic-normal density on the simplex
//! with parameters `τ`. Posterior draws of `τ` come from adaptive
//! random-walk Metropolis in unconstrained coordinates:
//!
//! * Dirichlet: `θ = ln α`.
//! * Logistic-normal: `θ = (μ, ln(L_ii - floor), L_ij for i > j)` where
//!   `Σ = L Lᵀ`.

mod embedding;
pub mod sampler;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::logsumexp;
use crate::rng::task_rng;
use crate::simplex::{
    alr, clamp_to_interior, DirichletParams, InteriorPmpVector, LogisticNormalParams, PmpVector,
    SimplexError, DEFAULT_EPSILON,
};

pub use embedding::{cluster_embedding, mean_embedding, Embedding, KMEANS_RESTARTS};
pub use sampler::Diagnostics;

use sampler::{effective_sample_size, laplace_factor, run_rwm, split_rhat, RwmSettings};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("cannot fit a meta-model to an empty group")]
    EmptyGroup,
    #[error("a meta-model fit needs at least 2 PMPs, got {0}")]
    GroupTooSmall(usize),
    #[error("group members have {actual} components, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid meta-model configuration: {0}")]
    InvalidConfig(String),
    #[error("requested {clusters} clusters from {draws} draws")]
    TooManyClusters { clusters: usize, draws: usize },
    #[error("parameters do not match the {0:?} family")]
    FamilyMismatch(Family),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dirichlet,
    #[default]
    LogisticNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaModelConfig {
    pub family: Family,
    /// Prior sd of `μ` (logistic-normal).
    pub mu_scale: f64,
    /// Half-normal scale of Cholesky diagonals and normal sd of the
    /// off-diagonals (logistic-normal).
    pub sigma_scale: f64,
    /// Prior sd of `ln α` (Dirichlet).
    pub alpha_log_scale: f64,
    pub n_warmup: usize,
    /// Total retained draws `D` across all chains.
    pub n_draws: usize,
    pub n_chains: usize,
    pub target_accept: f64,
    pub epsilon_clamp: f64,
    /// Lower bound added to every Cholesky diagonal. Keeps the posterior
    /// proper when all group members coincide.
    pub chol_floor: f64,
}

impl Default for MetaModelConfig {
    fn default() -> Self {
        MetaModelConfig {
            family: Family::LogisticNormal,
            mu_scale: 5.0,
            sigma_scale: 2.5,
            alpha_log_scale: 3.0,
            n_warmup: 1000,
            n_draws: 2000,
            n_chains: 4,
            target_accept: 0.3,
            epsilon_clamp: DEFAULT_EPSILON,
            chol_floor: 1e-6,
        }
    }
}

impl MetaModelConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        let positive = [
            ("mu_scale", self.mu_scale),
            ("sigma_scale", self.sigma_scale),
            ("alpha_log_scale", self.alpha_log_scale),
            ("epsilon_clamp", self.epsilon_clamp),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MetaError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.chol_floor >= 0.0 && self.chol_floor.is_finite()) {
            return Err(MetaError::InvalidConfig("chol_floor must be non-negative".into()));
        }
        if self.n_draws == 0 {
            return Err(MetaError::InvalidConfig("n_draws must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(MetaError::InvalidConfig("n_chains must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(MetaError::InvalidConfig("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One meta-model parameter vector `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaParams {
    Dirichlet(DirichletParams),
    LogisticNormal(LogisticNormalParams),
}

/// A simplex point with its logs and ALR coordinates precomputed.
#[derive(Debug, Clone)]
pub struct PreparedPoint {
    ln_p: Vec<f64>,
    z: Vec<f64>,
    sum_ln: f64,
}

impl PreparedPoint {
    pub fn new(p: &InteriorPmpVector) -> Self {
        let ln_p: Vec<f64> = p.as_slice().iter().map(|v| v.ln()).collect();
        let last = ln_p[ln_p.len() - 1];
        let z = ln_p[..ln_p.len() - 1].iter().map(|v| v - last).collect();
        let sum_ln = ln_p.iter().sum();
        PreparedPoint { ln_p, z, sum_ln }
    }

    pub fn parts(&self) -> usize {
        self.ln_p.len()
    }
}

impl MetaParams {
    pub fn family(&self) -> Family {
        match self {
            MetaParams::Dirichlet(_) => Family::Dirichlet,
            MetaParams::LogisticNormal(_) => Family::LogisticNormal,
        }
    }

    pub fn parts(&self) -> usize {
        match self {
            MetaParams::Dirichlet(d) => d.parts(),
            MetaParams::LogisticNormal(l) => l.parts(),
        }
    }

    pub fn logpdf(&self, p: &InteriorPmpVector) -> Result<f64, SimplexError> {
        match self {
            MetaParams::Dirichlet(d) => d.logpdf(p),
            MetaParams::LogisticNormal(l) => l.logpdf(p),
        }
    }

    /// Log-density at a prepared point; dimensions are not checked.
    pub fn logpdf_prepared(&self, p: &PreparedPoint) -> f64 {
        match self {
            MetaParams::Dirichlet(d) => {
                d.alpha()
                    .iter()
                    .zip(&p.ln_p)
                    .map(|(a, l)| (a - 1.0) * l)
                    .sum::<f64>()
                    - d.ln_norm()
            }
            MetaParams::LogisticNormal(l) => l.logpdf_alr(&p.z) - p.sum_ln,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PmpVector {
        match self {
            MetaParams::Dirichlet(d) => d.sample(rng),
            MetaParams::LogisticNormal(l) => l.sample(rng),
        }
    }

    /// Coordinates used for clustering: `ln α`, or `(μ, ln L_ii, L_ij)`.
    pub fn cluster_coordinates(&self) -> Vec<f64> {
        match self {
            MetaParams::Dirichlet(d) => d.alpha().iter().map(|a| a.ln()).collect(),
            MetaParams::LogisticNormal(l) => {
                let dim = l.mu().len();
                let mut out: Vec<f64> = l.mu().iter().copied().collect();
                out.extend((0..dim).map(|i| l.chol()[(i, i)].ln()));
                for i in 0..dim {
                    for j in 0..i {
                        out.push(l.chol()[(i, j)]);
                    }
                }
                out
            }
        }
    }

    /// Coordinate-wise average in the natural parameterization: mean `α`,
    /// or mean `μ` and mean Cholesky factor.
    pub fn natural_mean<'a, I>(family: Family, members: I) -> Result<MetaParams, MetaError>
    where
        I: IntoIterator<Item = (&'a MetaParams, f64)>,
    {
        let mut total_weight = 0.0;
        match family {
            Family::Dirichlet => {
                let mut acc: Option<Vec<f64>> = None;
                for (m, w) in members {
                    let MetaParams::Dirichlet(d) = m else {
                        return Err(MetaError::FamilyMismatch(family));
                    };
                    let acc = acc.get_or_insert_with(|| vec![0.0; d.parts()]);
                    for (s, a) in acc.iter_mut().zip(d.alpha()) {
                        *s += w * a;
                    }
                    total_weight += w;
                }
                let acc = acc.ok_or(MetaError::EmptyGroup)?;
                Ok(MetaParams::Dirichlet(DirichletParams::new(
                    acc.into_iter().map(|s| s / total_weight).collect(),
                )?))
            }
            Family::LogisticNormal => {
                let mut acc: Option<(DVector<f64>, DMatrix<f64>)> = None;
                for (m, w) in members {
                    let MetaParams::LogisticNormal(l) = m else {
                        return Err(MetaError::FamilyMismatch(family));
                    };
                    let d = l.mu().len();
                    let (mu, chol) =
                        acc.get_or_insert_with(|| (DVector::zeros(d), DMatrix::zeros(d, d)));
                    *mu += l.mu() * w;
                    *chol += l.chol() * w;
                    total_weight += w;
                }
                let (mu, chol) = acc.ok_or(MetaError::EmptyGroup)?;
                Ok(MetaParams::LogisticNormal(LogisticNormalParams::from_cholesky(
                    mu / total_weight,
                    chol / total_weight,
                )?))
            }
        }
    }
}

/// Sufficient statistics of a clamped group.
#[derive(Debug, Clone)]
pub(crate) struct GroupStats {
    parts: usize,
    n: f64,
    /// `Σ_i ln p_ij` per component.
    sum_ln: Vec<f64>,
    /// Mean of the ALR coordinates.
    z_mean: DVector<f64>,
    /// `Σ_i (z_i - z̄)(z_i - z̄)ᵀ`.
    scatter: DMatrix<f64>,
    degenerate: bool,
}

impl GroupStats {
    pub(crate) fn new(group: &[PmpVector], epsilon: f64) -> Result<Self, MetaError> {
        let first = group.first().ok_or(MetaError::EmptyGroup)?;
        let parts = first.parts();
        let clamped = group
            .iter()
            .map(|p| {
                if p.parts() != parts {
                    return Err(MetaError::DimensionMismatch {
                        expected: parts,
                        actual: p.parts(),
                    });
                }
                Ok(clamp_to_interior(p, epsilon)?)
            })
            .collect::<Result<Vec<_>, MetaError>>()?;
        let n = clamped.len() as f64;
        let mut sum_ln = vec![0.0; parts];
        let zs: Vec<DVector<f64>> = clamped
            .iter()
            .map(|p| {
                for (s, v) in sum_ln.iter_mut().zip(p.as_slice()) {
                    *s += v.ln();
                }
                DVector::from_vec(alr(p))
            })
            .collect();
        let mut z_mean = DVector::zeros(parts - 1);
        for z in &zs {
            z_mean += z;
        }
        z_mean /= n;
        let mut scatter = DMatrix::zeros(parts - 1, parts - 1);
        for z in &zs {
            let c = z - &z_mean;
            scatter += &c * c.transpose();
        }
        let degenerate = clamped
            .iter()
            .all(|p| p.as_slice() == clamped[0].as_slice());
        Ok(GroupStats {
            parts,
            n,
            sum_ln,
            z_mean,
            scatter,
            degenerate,
        })
    }

    fn log_likelihood(&self, params: &MetaParams) -> f64 {
        match params {
            MetaParams::Dirichlet(d) => {
                d.alpha()
                    .iter()
                    .zip(&self.sum_ln)
                    .map(|(a, s)| (a - 1.0) * s)
                    .sum::<f64>()
                    - self.n * d.ln_norm()
            }
            MetaParams::LogisticNormal(l) => {
                let dim = self.parts - 1;
                let chol = l.chol();
                // tr(Σ⁻¹ S) = ‖L⁻¹ C‖² summed over the columns of S
                let solved = chol
                    .solve_lower_triangular(&self.scatter)
                    .expect("positive diagonal");
                let inner = chol
                    .solve_lower_triangular(&solved.transpose())
                    .expect("positive diagonal");
                let trace = inner.trace();
                let diff = &self.z_mean - l.mu();
                let w = chol.solve_lower_triangular(&diff).expect("positive diagonal");
                let quad = trace + self.n * w.norm_squared();
                let ln_det: f64 = (0..dim).map(|i| chol[(i, i)].ln()).sum();
                -0.5 * self.n * dim as f64 * LN_2PI - self.n * ln_det - 0.5 * quad
                    - self.sum_ln.iter().sum::<f64>()
            }
        }
    }
}

fn normal_logpdf(x: f64, sd: f64) -> f64 {
    -0.5 * (x / sd).powi(2) - sd.ln() - 0.5 * LN_2PI
}

/// Number of unconstrained coordinates of a family on `J` components.
pub fn unconstrained_dim(family: Family, parts: usize) -> usize {
    match family {
        Family::Dirichlet => parts,
        Family::LogisticNormal => {
            let d = parts - 1;
            d + d * (d + 1) / 2
        }
    }
}

/// Maps unconstrained coordinates to parameters; `None` on overflow.
pub fn from_unconstrained(
    family: Family,
    parts: usize,
    theta: &[f64],
    chol_floor: f64,
) -> Option<MetaParams> {
    match family {
        Family::Dirichlet => {
            let alpha: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
            DirichletParams::new(alpha).ok().map(MetaParams::Dirichlet)
        }
        Family::LogisticNormal => {
            let d = parts - 1;
            let mu = DVector::from_column_slice(&theta[..d]);
            let mut chol = DMatrix::zeros(d, d);
            for i in 0..d {
                chol[(i, i)] = chol_floor + theta[d + i].exp();
            }
            let mut k = 2 * d;
            for i in 0..d {
                for j in 0..i {
                    chol[(i, j)] = theta[k];
                    k += 1;
                }
            }
            LogisticNormalParams::from_cholesky(mu, chol)
                .ok()
                .map(MetaParams::LogisticNormal)
        }
    }
}

/// Inverse of [`from_unconstrained`]. Diagonals at or below the floor map
/// to a large negative log.
pub fn to_unconstrained(params: &MetaParams, chol_floor: f64) -> Vec<f64> {
    match params {
        MetaParams::Dirichlet(d) => d.alpha().iter().map(|a| a.ln()).collect(),
        MetaParams::LogisticNormal(l) => {
            let d = l.mu().len();
            let mut out: Vec<f64> = l.mu().iter().copied().collect();
            out.extend((0..d).map(|i| (l.chol()[(i, i)] - chol_floor).max(1e-300).ln()));
            for i in 0..d {
                for j in 0..i {
                    out.push(l.chol()[(i, j)]);
                }
            }
            out
        }
    }
}

/// Log prior density of the unconstrained coordinates, including the
/// Jacobian of the log-diagonal transform.
fn log_prior_unconstrained(family: Family, parts: usize, theta: &[f64], config: &MetaModelConfig) -> f64 {
    match family {
        Family::Dirichlet => theta.iter().map(|t| normal_logpdf(*t, config.alpha_log_scale)).sum(),
        Family::LogisticNormal => {
            let d = parts - 1;
            let s = config.sigma_scale;
            let mut lp: f64 = theta[..d].iter().map(|m| normal_logpdf(*m, config.mu_scale)).sum();
            for t in &theta[d..2 * d] {
                let l = config.chol_floor + t.exp();
                // half-normal density of L_ii times dL/dθ = e^θ
                lp += normal_logpdf(l, s) + std::f64::consts::LN_2 + t;
            }
            lp += theta[2 * d..].iter().map(|o| normal_logpdf(*o, s)).sum::<f64>();
            lp
        }
    }
}

/// `Σ_i ln p(π_i | τ)` over the group clamped at `epsilon`.
pub fn log_likelihood(params: &MetaParams, group: &[PmpVector], epsilon: f64) -> Result<f64, MetaError> {
    let stats = GroupStats::new(group, epsilon)?;
    if stats.parts != params.parts() {
        return Err(MetaError::DimensionMismatch {
            expected: params.parts(),
            actual: stats.parts,
        });
    }
    Ok(stats.log_likelihood(params))
}

/// Log prior of `τ` expressed in the sampler's unconstrained coordinates.
pub fn log_prior(params: &MetaParams, config: &MetaModelConfig) -> f64 {
    let theta = to_unconstrained(params, config.chol_floor);
    log_prior_unconstrained(params.family(), params.parts(), &theta, config)
}

/// Unnormalized log posterior targeted by the sampler.
pub fn log_posterior(
    params: &MetaParams,
    group: &[PmpVector],
    config: &MetaModelConfig,
) -> Result<f64, MetaError> {
    if params.family() != config.family {
        return Err(MetaError::FamilyMismatch(config.family));
    }
    Ok(log_likelihood(params, group, config.epsilon_clamp)? + log_prior(params, config))
}

/// Posterior draws of one meta-model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaPosterior {
    pub family: Family,
    pub parts: usize,
    pub draws: Vec<MetaParams>,
    pub diagnostics: Diagnostics,
    pub config: MetaModelConfig,
    pub seed: u64,
}

fn initial_point(stats: &GroupStats, config: &MetaModelConfig) -> Vec<f64> {
    let parts = stats.parts;
    match config.family {
        Family::Dirichlet => {
            // moment matching on the geometric means keeps α finite for
            // concentrated groups
            let mean_ln: Vec<f64> = stats.sum_ln.iter().map(|s| s / stats.n).collect();
            let m = crate::simplex::normalize_from_log(&mean_ln)
                .map(PmpVector::into_vec)
                .unwrap_or_else(|_| vec![1.0 / parts as f64; parts]);
            let scale = parts as f64;
            m.iter().map(|v| (v * scale).max(1e-3).ln()).collect()
        }
        Family::LogisticNormal => {
            let d = parts - 1;
            let denom = (stats.n - 1.0).max(1.0);
            // the ridge only matters when members coincide; it then starts the
            // chain at the floor where the posterior mass sits
            let ridge = config.chol_floor.powi(2).max(1e-300);
            let cov = &stats.scatter / denom + DMatrix::identity(d, d) * ridge;
            let chol = cov
                .cholesky()
                .map(|c| c.l())
                .unwrap_or_else(|| DMatrix::identity(d, d));
            let mut theta: Vec<f64> = stats.z_mean.iter().copied().collect();
            theta.extend((0..d).map(|i| (chol[(i, i)] - config.chol_floor).max(1e-12).ln()));
            for i in 0..d {
                for j in 0..i {
                    theta.push(chol[(i, j)]);
                }
            }
            theta
        }
    }
}

/// Rough posterior scale per coordinate used as the first proposal.
fn initial_sd(stats: &GroupStats, family: Family, init: &[f64], chol_floor: f64) -> Vec<f64> {
    let root_n = stats.n.sqrt();
    match family {
        Family::Dirichlet => vec![0.5 / root_n; init.len()],
        Family::LogisticNormal => {
            let d = stats.parts - 1;
            let diag: Vec<f64> = init[d..2 * d].iter().map(|t| chol_floor + t.exp()).collect();
            let smallest = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut sd: Vec<f64> = diag.iter().map(|l| l / root_n).collect();
            sd.extend(std::iter::repeat_n(1.0 / (2.0 * stats.n).sqrt(), d));
            sd.extend(std::iter::repeat_n(smallest / root_n, d * (d - 1) / 2));
            sd
        }
    }
}

/// Fits a meta-model to one group of PMPs.
///
/// Chain `c` runs `n_warmup` adaptation steps and then
/// `⌈D / n_chains⌉ · n_chains` iterations, keeping every `n_chains`-th
/// state; the first `D` retained states across chains form the posterior.
pub fn fit(group: &[PmpVector], config: &MetaModelConfig, seed: u64) -> Result<MetaPosterior, MetaError> {
    config.validate()?;
    if group.is_empty() {
        return Err(MetaError::EmptyGroup);
    }
    if group.len() < 2 {
        return Err(MetaError::GroupTooSmall(group.len()));
    }
    let stats = GroupStats::new(group, config.epsilon_clamp)?;
    let family = config.family;
    let parts = stats.parts;
    let target = |theta: &[f64]| match from_unconstrained(family, parts, theta, config.chol_floor) {
        Some(params) => {
            let lp = stats.log_likelihood(&params) + log_prior_unconstrained(family, parts, theta, config);
            if lp.is_nan() {
                f64::NEG_INFINITY
            } else {
                lp
            }
        }
        None => f64::NEG_INFINITY,
    };
    let init = initial_point(&stats, config);
    let sd0 = initial_sd(&stats, family, &init, config.chol_floor);
    let spread = laplace_factor(target, &init, &sd0);
    let dim = init.len();
    let proposal = &spread * (2.38 / (dim as f64).sqrt());
    let per_chain = config.n_draws.div_ceil(config.n_chains);
    let settings = RwmSettings {
        n_warmup: config.n_warmup,
        n_iter: per_chain * config.n_chains,
        thin: config.n_chains,
        target_accept: config.target_accept,
    };
    let chains: Vec<sampler::Chain> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = task_rng(seed, "meta-chain", c as u64);
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let start: Vec<f64> = (DVector::from_column_slice(&init) + &spread * z).iter().copied().collect();
            run_rwm(target, start, proposal.clone(), &settings, &mut rng)
        })
        .collect();

    let coord = |i: usize| -> Vec<Vec<f64>> {
        chains
            .iter()
            .map(|c| c.draws.iter().map(|d| d[i]).collect())
            .collect()
    };
    let split_rhat: Vec<f64> = (0..dim).map(|i| split_rhat(&coord(i))).collect();
    let ess: Vec<f64> = (0..dim).map(|i| effective_sample_size(&coord(i))).collect();
    let draws = chains
        .iter()
        .flat_map(|c| c.draws.iter())
        .take(config.n_draws)
        .map(|theta| {
            from_unconstrained(family, parts, theta, config.chol_floor)
                .expect("retained states have finite density")
        })
        .collect();
    Ok(MetaPosterior {
        family,
        parts,
        draws,
        diagnostics: Diagnostics {
            acceptance: chains.iter().map(|c| c.acceptance).collect(),
            split_rhat,
            ess,
            degenerate: stats.degenerate,
            group_size: group.len(),
        },
        config: config.clone(),
        seed,
    })
}

impl MetaPosterior {
    /// Wraps externally produced draws, e.g. for testing embeddings.
    pub fn from_draws(draws: Vec<MetaParams>, config: MetaModelConfig, seed: u64) -> Result<Self, MetaError> {
        let first = draws.first().ok_or(MetaError::EmptyGroup)?;
        let family = first.family();
        let parts = first.parts();
        for d in &draws {
            if d.family() != family {
                return Err(MetaError::FamilyMismatch(family));
            }
            if d.parts() != parts {
                return Err(MetaError::DimensionMismatch {
                    expected: parts,
                    actual: d.parts(),
                });
            }
        }
        Ok(MetaPosterior {
            family,
            parts,
            diagnostics: Diagnostics {
                acceptance: Vec::new(),
                split_rhat: Vec::new(),
                ess: Vec::new(),
                degenerate: false,
                group_size: 0,
            },
            draws,
            config: MetaModelConfig { family, ..config },
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Monte-Carlo posterior predictive
    /// `ln (1/D) Σ_d p(π | τ⁽ᵈ⁾)` at `p` clamped to the interior.
    pub fn posterior_predictive_logpdf(&self, p: &PmpVector) -> Result<f64, MetaError> {
        if p.parts() != self.parts {
            return Err(MetaError::DimensionMismatch {
                expected: self.parts,
                actual: p.parts(),
            });
        }
        let point = PreparedPoint::new(&clamp_to_interior(p, self.config.epsilon_clamp)?);
        Ok(self.predictive_prepared(&point))
    }

    pub(crate) fn predictive_prepared(&self, point: &PreparedPoint) -> f64 {
        let values: Vec<f64> = self.draws.iter().map(|d| d.logpdf_prepared(point)).collect();
        logsumexp(&values) - (self.draws.len() as f64).ln()
    }

    /// Posterior means of the unconstrained coordinates.
    pub fn unconstrained_mean(&self) -> Vec<f64> {
        let dim = unconstrained_dim(self.family, self.parts);
        let mut acc = vec![0.0; dim];
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(to_unconstrained(d, self.config.chol_floor)) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / self.draws.len() as f64).collect()
    }
}

#[cfg(test)]
mod tests;
