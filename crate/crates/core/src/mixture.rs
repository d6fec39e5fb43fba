//! The predictive mixture `f(π̃) = Σ_j π°_j p_j(π̃ | {π̃}_j)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{barycentric_grid, GridError, SimplexDensityGrid};
use crate::meta::{cluster_embedding, mean_embedding, MetaError, MetaParams, MetaPosterior, PreparedPoint};
use crate::numeric::logsumexp;
use crate::rng::{derive_seed, task_rng};
use crate::simplex::{clamp_to_interior, PmpVector, SimplexError};

/// Monte-Carlo draws per component for logistic-normal moments.
pub const DEFAULT_MOMENT_DRAWS: usize = 100_000;

const CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("observed PMPs have {observed} entries but {fits} meta-model fits were supplied")]
    ComponentCount { observed: usize, fits: usize },
    #[error("meta-model {index} has {actual} components, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, actual: usize },
    #[error("no meta-model fit for model {0} (its level-2 group was empty)")]
    MissingComponent(usize),
    #[error("density grids need 3 components, got {0}")]
    NotTernary(usize),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureMode {
    /// Every posterior draw, weight `1/D`.
    #[default]
    Full,
    /// `C` cluster centers weighted by occupancy.
    Embedded,
}

/// Weighted parameter vectors of one component density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub params: Vec<MetaParams>,
    pub weights: Vec<f64>,
}

impl Component {
    fn logpdf_prepared(&self, point: &PreparedPoint) -> f64 {
        let terms: Vec<f64> = self
            .params
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w.ln() + p.logpdf_prepared(point))
            .collect();
        logsumexp(&terms)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PmpVector {
        let c = pick(&self.weights, rng);
        self.params[c].sample(rng)
    }
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    if weights.len() == 1 {
        return 0;
    }
    let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// First and second moments of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMoments {
    pub mean: Vec<f64>,
    /// `E[p_j²]`.
    pub second: Vec<f64>,
    /// Monte-Carlo standard error of `mean`; zero when analytic.
    pub mean_stderr: Vec<f64>,
}

impl ComponentMoments {
    pub fn variance_trace(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.second)
            .map(|(m, s)| s - m * m)
            .sum::<f64>()
            .max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveMixture {
    weights: PmpVector,
    components: Vec<Component>,
    moments: Vec<ComponentMoments>,
    mode: MixtureMode,
    clusters: Option<usize>,
    seed: u64,
    epsilon: f64,
    moment_draws: usize,
}

/// Builds the mixture. In embedded mode each posterior is summarized by
/// [`cluster_embedding`] with `clusters` centers (`C = 1` is the mean
/// embedding). Component moments are computed once here.
pub fn build_mixture(
    observed: &PmpVector,
    fits: &[Option<MetaPosterior>],
    mode: MixtureMode,
    clusters: usize,
    seed: u64,
) -> Result<PredictiveMixture, MixtureError> {
    build_mixture_with(observed, fits, mode, clusters, seed, DEFAULT_MOMENT_DRAWS)
}

pub fn build_mixture_with(
    observed: &PmpVector,
    fits: &[Option<MetaPosterior>],
    mode: MixtureMode,
    clusters: usize,
    seed: u64,
    moment_draws: usize,
) -> Result<PredictiveMixture, MixtureError> {
    let parts = observed.parts();
    if fits.len() != parts {
        return Err(MixtureError::ComponentCount {
            observed: parts,
            fits: fits.len(),
        });
    }
    let mut components = Vec::with_capacity(parts);
    let mut epsilon = f64::INFINITY;
    for (j, fit) in fits.iter().enumerate() {
        let post = fit.as_ref().ok_or(MixtureError::MissingComponent(j))?;
        if post.parts != parts {
            return Err(MixtureError::DimensionMismatch {
                index: j,
                expected: parts,
                actual: post.parts,
            });
        }
        epsilon = epsilon.min(post.config.epsilon_clamp);
        let component = match mode {
            MixtureMode::Full => Component {
                params: post.draws.clone(),
                weights: vec![1.0 / post.len() as f64; post.len()],
            },
            MixtureMode::Embedded => {
                let e = if clusters == 1 {
                    mean_embedding(post)?
                } else {
                    cluster_embedding(post, clusters, derive_seed(seed, &format!("embedding-{j}")))?
                };
                Component {
                    params: e.centers,
                    weights: e.weights,
                }
            }
        };
        components.push(component);
    }
    let moments = components
        .iter()
        .enumerate()
        .map(|(j, c)| component_moments(c, moment_draws, derive_seed(seed, &format!("moments-{j}"))))
        .collect();
    Ok(PredictiveMixture {
        weights: observed.clone(),
        components,
        moments,
        mode,
        clusters: (mode == MixtureMode::Embedded).then_some(clusters),
        seed,
        epsilon,
        moment_draws,
    })
}

fn component_moments(component: &Component, draws: usize, seed: u64) -> ComponentMoments {
    if let Some(m) = dirichlet_moments(component) {
        return m;
    }
    let parts = component.params[0].parts();
    let chunks = draws.div_ceil(CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = task_rng(seed, "component-moments", c as u64);
            let count = CHUNK.min(draws - c * CHUNK);
            let mut s1 = vec![0.0; parts];
            let mut s2 = vec![0.0; parts];
            for _ in 0..count {
                let p = component.sample(&mut rng);
                for (j, v) in p.as_slice().iter().enumerate() {
                    s1[j] += v;
                    s2[j] += v * v;
                }
            }
            (s1, s2)
        })
        .collect();
    let n = draws as f64;
    let mut mean = vec![0.0; parts];
    let mut second = vec![0.0; parts];
    for (s1, s2) in &partial {
        for j in 0..parts {
            mean[j] += s1[j];
            second[j] += s2[j];
        }
    }
    for j in 0..parts {
        mean[j] /= n;
        second[j] /= n;
    }
    let mean_stderr = mean
        .iter()
        .zip(&second)
        .map(|(m, s)| ((s - m * m).max(0.0) / (n - 1.0)).sqrt())
        .collect();
    ComponentMoments {
        mean,
        second,
        mean_stderr,
    }
}

/// Closed-form moments when every member is a Dirichlet:
/// `E[p_j] = α_j/α₀`, `E[p_j²] = α_j(α_j + 1) / (α₀(α₀ + 1))`.
fn dirichlet_moments(component: &Component) -> Option<ComponentMoments> {
    let parts = component.params[0].parts();
    let mut mean = vec![0.0; parts];
    let mut second = vec![0.0; parts];
    for (p, w) in component.params.iter().zip(&component.weights) {
        let MetaParams::Dirichlet(d) = p else {
            return None;
        };
        let a0 = d.concentration();
        for (j, a) in d.alpha().iter().enumerate() {
            mean[j] += w * a / a0;
            second[j] += w * a * (a + 1.0) / (a0 * (a0 + 1.0));
        }
    }
    let total: f64 = component.weights.iter().sum();
    for j in 0..parts {
        mean[j] /= total;
        second[j] /= total;
    }
    Some(ComponentMoments {
        mean,
        second,
        mean_stderr: vec![0.0; parts],
    })
}

/// JSON report of a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSummary {
    pub weights: Vec<f64>,
    pub mode: MixtureMode,
    pub clusters: Option<usize>,
    pub component_means: Vec<Vec<f64>>,
    pub component_mean_stderr: Vec<Vec<f64>>,
    pub component_variance_traces: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance_trace: f64,
    pub moment_draws: usize,
    pub seed: u64,
}

impl PredictiveMixture {
    pub fn parts(&self) -> usize {
        self.weights.parts()
    }

    pub fn weights(&self) -> &PmpVector {
        &self.weights
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn moments(&self) -> &[ComponentMoments] {
        &self.moments
    }

    pub fn mode(&self) -> MixtureMode {
        self.mode
    }

    /// `ln f(p)` at `p` clamped to the interior.
    pub fn mixture_logpdf(&self, p: &PmpVector) -> Result<f64, MixtureError> {
        let point = self.prepare(p)?;
        Ok(self.logpdf_prepared(&point))
    }

    /// `ln p_j(p)`, the log-density of component `j` alone.
    pub fn component_logpdf(&self, j: usize, p: &PmpVector) -> Result<f64, MixtureError> {
        let point = self.prepare(p)?;
        Ok(self.components[j].logpdf_prepared(&point))
    }

    fn prepare(&self, p: &PmpVector) -> Result<PreparedPoint, MixtureError> {
        if p.parts() != self.parts() {
            return Err(MixtureError::DimensionMismatch {
                index: 0,
                expected: self.parts(),
                actual: p.parts(),
            });
        }
        Ok(PreparedPoint::new(&clamp_to_interior(p, self.epsilon)?))
    }

    pub(crate) fn logpdf_prepared(&self, point: &PreparedPoint) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .as_slice()
            .iter()
            .zip(&self.components)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| w.ln() + c.logpdf_prepared(point))
            .collect();
        logsumexp(&terms)
    }

    /// `Σ_j π°_j E_j[π̃]`.
    pub fn mixture_mean(&self) -> PmpVector {
        let parts = self.parts();
        let mut mean = vec![0.0; parts];
        for (w, m) in self.weights.as_slice().iter().zip(&self.moments) {
            for (acc, v) in mean.iter_mut().zip(&m.mean) {
                *acc += w * v;
            }
        }
        PmpVector::with_tolerance(mean, 1e-9).expect("convex combination of simplex points")
    }

    /// Trace of the mixture covariance by the law of total variance.
    pub fn mixture_variance_trace(&self) -> f64 {
        let mean = self.mixture_mean();
        let mut second = vec![0.0; self.parts()];
        for (w, m) in self.weights.as_slice().iter().zip(&self.moments) {
            for (acc, v) in second.iter_mut().zip(&m.second) {
                *acc += w * v;
            }
        }
        second
            .iter()
            .zip(mean.as_slice())
            .map(|(s, m)| s - m * m)
            .sum::<f64>()
            .max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PmpVector {
        let j = pick(self.weights.as_slice(), rng);
        self.components[j].sample(rng)
    }

    /// `n` draws from the mixture, reproducible for a given seed at any
    /// thread count.
    pub fn sample_many(&self, n: usize, seed: u64) -> Vec<PmpVector> {
        (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = task_rng(seed, "mixture-sample", c as u64);
                let count = CHUNK.min(n - c * CHUNK);
                (0..count).map(move |_| self.sample(&mut rng)).collect::<Vec<_>>()
            })
            .collect()
    }

    /// Monte-Carlo estimate of `P(‖π̃ - e_q‖₁ ≤ radius)` and its standard
    /// error.
    pub fn vertex_mass(&self, q: usize, radius: f64, draws: usize, seed: u64) -> (f64, f64) {
        let hits = self
            .sample_many(draws, seed)
            .iter()
            .filter(|p| p.l1_distance_to_vertex(q) <= radius)
            .count();
        let p = hits as f64 / draws as f64;
        (p, (p * (1.0 - p) / draws as f64).sqrt())
    }

    /// `ln f` on the barycentric lattice of resolution `R`.
    pub fn density_grid(&self, resolution: usize) -> Result<SimplexDensityGrid, MixtureError> {
        if self.parts() != 3 {
            return Err(MixtureError::NotTernary(self.parts()));
        }
        let lattice = barycentric_grid(resolution, 3, self.epsilon)?;
        Ok(SimplexDensityGrid::evaluate(&lattice, |p| {
            self.logpdf_prepared(&PreparedPoint::new(p))
        }))
    }

    pub fn summary(&self) -> MixtureSummary {
        MixtureSummary {
            weights: self.weights.as_slice().to_vec(),
            mode: self.mode,
            clusters: self.clusters,
            component_means: self.moments.iter().map(|m| m.mean.clone()).collect(),
            component_mean_stderr: self.moments.iter().map(|m| m.mean_stderr.clone()).collect(),
            component_variance_traces: self.moments.iter().map(ComponentMoments::variance_trace).collect(),
            mean: self.mixture_mean().into_vec(),
            variance_trace: self.mixture_variance_trace(),
            moment_draws: self.moment_draws,
            seed: self.seed,
        }
    }
}
