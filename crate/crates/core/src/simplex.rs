//! Points on the probability simplex, the additive log-ratio link, and the
//! two simplex density families used by meta-models (Dirichlet and
//! logistic-normal).
//!
//! Densities are taken with respect to Lebesgue measure on the first `J - 1`
//! coordinates, so both families integrate to one over
//! `{p_1, …, p_{J-1} ≥ 0, Σ p_j ≤ 1}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{ln_multivariate_beta, logsumexp};

/// Default interior clamp used before any log-ratio transform.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Largest deviation of `Σ p_j` from one accepted by [`PmpVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Maximum deviation from symmetry accepted for a covariance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplexError {
    #[error("a simplex point needs at least 2 components, got {0}")]
    TooFewComponents(usize),
    #[error("entry {index} is not a valid probability: {value}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("entries sum to {sum}, which deviates from 1 by more than {tolerance}")]
    NotNormalized { sum: f64, tolerance: f64 },
    #[error("degenerate weights: every log-weight is -inf")]
    DegenerateWeights,
    #[error("epsilon {epsilon} must lie in (0, 1/{parts})")]
    InvalidEpsilon { epsilon: f64, parts: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("concentration parameters must be positive and finite")]
    InvalidConcentration,
    #[error("location vector must be finite")]
    InvalidLocation,
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    AsymmetricCovariance(f64),
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("Cholesky factor must be lower triangular with a positive diagonal")]
    InvalidCholesky,
}

/// A vector of posterior model probabilities: `J ≥ 2` non-negative weights
/// summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PmpVector(Vec<f64>);

impl PmpVector {
    /// Validates `probs` and rescales it so the entries sum to one within
    /// rounding. Inputs must already sum to one within [`SUM_TOLERANCE`].
    /// Inputs already normalized to 1e-12 are stored unchanged, so
    /// printed and re-parsed vectors keep their exact bits.
    pub fn new(probs: Vec<f64>) -> Result<Self, SimplexError> {
        Self::with_tolerance(probs, SUM_TOLERANCE)
    }

    /// Like [`PmpVector::new`] with a caller-chosen sum tolerance, for
    /// rounded inputs such as values printed to a few decimals.
    pub fn with_tolerance(probs: Vec<f64>, tolerance: f64) -> Result<Self, SimplexError> {
        if probs.len() < 2 {
            return Err(SimplexError::TooFewComponents(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0 + tolerance).contains(&value) {
                return Err(SimplexError::InvalidEntry { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(SimplexError::NotNormalized { sum, tolerance });
        }
        if (sum - 1.0).abs() <= 1e-12 && probs.iter().all(|&p| p <= 1.0) {
            return Ok(PmpVector(probs));
        }
        Ok(Self::rescaled(probs))
    }

    fn rescaled(mut probs: Vec<f64>) -> Self {
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p = (*p / sum).min(1.0);
        }
        PmpVector(probs)
    }

    /// The barycenter `(1/J, …, 1/J)`.
    pub fn uniform(parts: usize) -> Result<Self, SimplexError> {
        if parts < 2 {
            return Err(SimplexError::TooFewComponents(parts));
        }
        Ok(PmpVector(vec![1.0 / parts as f64; parts]))
    }

    /// The vertex `e_q` (0-based `q`).
    pub fn one_hot(parts: usize, q: usize) -> Result<Self, SimplexError> {
        if parts < 2 {
            return Err(SimplexError::TooFewComponents(parts));
        }
        if q >= parts {
            return Err(SimplexError::DimensionMismatch {
                expected: parts,
                actual: q + 1,
            });
        }
        let mut probs = vec![0.0; parts];
        probs[q] = 1.0;
        Ok(PmpVector(probs))
    }

    pub fn parts(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = j;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// L1 distance to the vertex `e_q`, i.e. `2 (1 - p_q)`.
    pub fn l1_distance_to_vertex(&self, q: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(j, &p)| if j == q { 1.0 - p } else { p })
            .sum()
    }
}

impl TryFrom<Vec<f64>> for PmpVector {
    type Error = SimplexError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        PmpVector::new(value)
    }
}

impl From<PmpVector> for Vec<f64> {
    fn from(value: PmpVector) -> Self {
        value.0
    }
}

/// A simplex point bounded away from the faces, produced by
/// [`clamp_to_interior`]. Every entry is strictly positive, so log-ratios
/// are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorPmpVector {
    probs: Vec<f64>,
}

impl InteriorPmpVector {
    pub fn parts(&self) -> usize {
        self.probs.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_pmp(&self) -> PmpVector {
        PmpVector(self.probs.clone())
    }

    /// `Σ_j ln p_j`, the negated log-Jacobian of the log-ratio map.
    pub fn sum_ln(&self) -> f64 {
        self.probs.iter().map(|p| p.ln()).sum()
    }
}

/// Normalized exponentiation `exp(w - logsumexp(w))`.
pub fn normalize_from_log(log_weights: &[f64]) -> Result<PmpVector, SimplexError> {
    if log_weights.len() < 2 {
        return Err(SimplexError::TooFewComponents(log_weights.len()));
    }
    for (index, &value) in log_weights.iter().enumerate() {
        if value.is_nan() || value == f64::INFINITY {
            return Err(SimplexError::InvalidEntry { index, value });
        }
    }
    let lse = logsumexp(log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(SimplexError::DegenerateWeights);
    }
    let probs = log_weights.iter().map(|w| (w - lse).exp()).collect();
    Ok(PmpVector::rescaled(probs))
}

/// Raises every entry to at least `epsilon` and renormalizes.
pub fn clamp_to_interior(p: &PmpVector, epsilon: f64) -> Result<InteriorPmpVector, SimplexError> {
    let parts = p.parts();
    if !(epsilon > 0.0 && epsilon < 1.0 / parts as f64) {
        return Err(SimplexError::InvalidEpsilon { epsilon, parts });
    }
    if p.0.iter().all(|&v| v >= epsilon) {
        return Ok(InteriorPmpVector { probs: p.0.clone() });
    }
    let raised: Vec<f64> = p.0.iter().map(|&v| v.max(epsilon)).collect();
    let sum: f64 = raised.iter().sum();
    Ok(InteriorPmpVector {
        probs: raised.into_iter().map(|v| v / sum).collect(),
    })
}

/// Additive log-ratio with the last component as reference.
pub fn alr(p: &InteriorPmpVector) -> Vec<f64> {
    let last = p.probs[p.probs.len() - 1].ln();
    p.probs[..p.probs.len() - 1]
        .iter()
        .map(|v| v.ln() - last)
        .collect()
}

/// Inverse of [`alr`]: the softmax of `(z, 0)`. `z` must be finite.
pub fn alr_inv(z: &[f64]) -> PmpVector {
    let shift = z.iter().copied().fold(0.0f64, f64::max);
    let mut probs: Vec<f64> = z.iter().map(|v| (v - shift).exp()).collect();
    probs.push((-shift).exp());
    PmpVector::rescaled(probs)
}

/// Dirichlet concentration parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DirichletRepr", into = "DirichletRepr")]
pub struct DirichletParams {
    alpha: Vec<f64>,
    ln_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct DirichletRepr {
    alpha: Vec<f64>,
}

impl TryFrom<DirichletRepr> for DirichletParams {
    type Error = SimplexError;
    fn try_from(value: DirichletRepr) -> Result<Self, Self::Error> {
        DirichletParams::new(value.alpha)
    }
}

impl From<DirichletParams> for DirichletRepr {
    fn from(value: DirichletParams) -> Self {
        DirichletRepr { alpha: value.alpha }
    }
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self, SimplexError> {
        if alpha.len() < 2 {
            return Err(SimplexError::TooFewComponents(alpha.len()));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(SimplexError::InvalidConcentration);
        }
        let ln_norm = ln_multivariate_beta(&alpha);
        Ok(Self { alpha, ln_norm })
    }

    pub fn parts(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn concentration(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// `E[p_j] = α_j / Σ α`.
    pub fn mean(&self) -> PmpVector {
        let total = self.concentration();
        PmpVector::rescaled(self.alpha.iter().map(|a| a / total).collect())
    }

    pub fn logpdf(&self, p: &InteriorPmpVector) -> Result<f64, SimplexError> {
        check_parts(self.parts(), p.parts())?;
        Ok(self.logpdf_unchecked(p.as_slice()))
    }

    pub(crate) fn logpdf_unchecked(&self, p: &[f64]) -> f64 {
        let kernel: f64 = self
            .alpha
            .iter()
            .zip(p)
            .map(|(a, v)| (a - 1.0) * v.ln())
            .sum();
        kernel - self.ln_norm
    }

    /// Log normalizer `ln B(α)`.
    pub fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    /// Draws a point via normalized Gamma variates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PmpVector {
        loop {
            let draws: Vec<f64> = self
                .alpha
                .iter()
                .map(|&a| Gamma::new(a, 1.0).expect("alpha validated").sample(rng))
                .collect();
            let sum: f64 = draws.iter().sum();
            if sum > 0.0 && sum.is_finite() {
                return PmpVector::rescaled(draws);
            }
        }
    }
}

/// Logistic-normal parameters: `alr(p) ~ Normal(μ, L Lᵀ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogisticNormalRepr", into = "LogisticNormalRepr")]
pub struct LogisticNormalParams {
    mu: DVector<f64>,
    chol: DMatrix<f64>,
    ln_det_chol: f64,
}

#[derive(Serialize, Deserialize)]
struct LogisticNormalRepr {
    mu: Vec<f64>,
    /// Lower Cholesky factor, row by row.
    chol: Vec<Vec<f64>>,
}

impl TryFrom<LogisticNormalRepr> for LogisticNormalParams {
    type Error = SimplexError;
    fn try_from(value: LogisticNormalRepr) -> Result<Self, Self::Error> {
        let d = value.mu.len();
        if value.chol.len() != d || value.chol.iter().any(|r| r.len() != d) {
            return Err(SimplexError::DimensionMismatch {
                expected: d,
                actual: value.chol.len(),
            });
        }
        let chol = DMatrix::from_fn(d, d, |i, j| value.chol[i][j]);
        LogisticNormalParams::from_cholesky(DVector::from_vec(value.mu), chol)
    }
}

impl From<LogisticNormalParams> for LogisticNormalRepr {
    fn from(value: LogisticNormalParams) -> Self {
        let d = value.mu.len();
        LogisticNormalRepr {
            mu: value.mu.iter().copied().collect(),
            chol: (0..d)
                .map(|i| (0..d).map(|j| value.chol[(i, j)]).collect())
                .collect(),
        }
    }
}

impl LogisticNormalParams {
    /// Validates `sigma` (symmetric within [`SYMMETRY_TOLERANCE`], positive
    /// definite) and stores its Cholesky factor.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self, SimplexError> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(SimplexError::DimensionMismatch {
                expected: d,
                actual: sigma.nrows(),
            });
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if !(asym <= SYMMETRY_TOLERANCE) {
            return Err(SimplexError::AsymmetricCovariance(asym));
        }
        let chol = sigma
            .cholesky()
            .ok_or(SimplexError::NotPositiveDefinite)?
            .l();
        Self::from_cholesky(mu, chol)
    }

    /// Builds parameters from a lower-triangular factor with positive
    /// diagonal.
    pub fn from_cholesky(mu: DVector<f64>, chol: DMatrix<f64>) -> Result<Self, SimplexError> {
        let d = mu.len();
        if d == 0 {
            return Err(SimplexError::TooFewComponents(1));
        }
        if chol.nrows() != d || chol.ncols() != d {
            return Err(SimplexError::DimensionMismatch {
                expected: d,
                actual: chol.nrows(),
            });
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(SimplexError::InvalidLocation);
        }
        for i in 0..d {
            if !(chol[(i, i)] > 0.0 && chol[(i, i)].is_finite()) {
                return Err(SimplexError::InvalidCholesky);
            }
            for j in 0..d {
                let v = chol[(i, j)];
                if !v.is_finite() || (j > i && v != 0.0) {
                    return Err(SimplexError::InvalidCholesky);
                }
            }
        }
        let ln_det_chol = (0..d).map(|i| chol[(i, i)].ln()).sum();
        Ok(Self {
            mu,
            chol,
            ln_det_chol,
        })
    }

    /// Number of simplex components `J` (one more than the ALR dimension).
    pub fn parts(&self) -> usize {
        self.mu.len() + 1
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// Multivariate normal log-density of ALR coordinates `z`.
    pub fn logpdf_alr(&self, z: &[f64]) -> f64 {
        let d = self.mu.len();
        let mut stack = [0.0f64; 16];
        let mut heap;
        let solved: &mut [f64] = if d <= stack.len() {
            &mut stack[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        // forward substitution L w = z - μ
        let mut quad = 0.0;
        for i in 0..d {
            let mut acc = z[i] - self.mu[i];
            for k in 0..i {
                acc -= self.chol[(i, k)] * solved[k];
            }
            let w = acc / self.chol[(i, i)];
            solved[i] = w;
            quad += w * w;
        }
        -0.5 * (d as f64 * LN_2PI + quad) - self.ln_det_chol
    }

    pub fn logpdf(&self, p: &InteriorPmpVector) -> Result<f64, SimplexError> {
        check_parts(self.parts(), p.parts())?;
        Ok(self.logpdf_alr(&alr(p)) - p.sum_ln())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PmpVector {
        alr_inv(self.sample_alr(rng).as_slice())
    }

    pub fn sample_alr<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.mu.len();
        let noise = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        &self.mu + &self.chol * noise
    }
}

fn check_parts(expected: usize, actual: usize) -> Result<(), SimplexError> {
    if expected == actual {
        Ok(())
    } else {
        Err(SimplexError::DimensionMismatch { expected, actual })
    }
}

/// Log Dirichlet density at an interior point.
pub fn dirichlet_logpdf(
    p: &InteriorPmpVector,
    params: &DirichletParams,
) -> Result<f64, SimplexError> {
    params.logpdf(p)
}

/// Logistic-normal log density at an interior point, including the ALR
/// Jacobian `-Σ_j ln p_j`.
pub fn logistic_normal_logpdf(
    p: &InteriorPmpVector,
    params: &LogisticNormalParams,
) -> Result<f64, SimplexError> {
    params.logpdf(p)
}

pub fn dirichlet_mean(params: &DirichletParams) -> PmpVector {
    params.mean()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_uniform_and_analytic() {
        let p = normalize_from_log(&[0.0, 0.0, 0.0]).unwrap();
        for v in p.as_slice() {
            assert!(close(*v, 1.0 / 3.0, 1e-15));
        }
        let q = normalize_from_log(&[2f64.ln(), 0.0]).unwrap();
        assert!(close(q.as_slice()[0], 2.0 / 3.0, 1e-15));
        assert!(close(q.as_slice()[1], 1.0 / 3.0, 1e-15));
    }

    #[test]
    fn normalize_far_from_zero() {
        // e^0, e^-1, e^-2 to 17 significant digits
        let e = [1.0, 0.367_879_441_171_442_33, 0.135_335_283_236_612_7];
        let total: f64 = e.iter().sum();
        let p = normalize_from_log(&[-1000.0, -1001.0, -1002.0]).unwrap();
        for (a, b) in p.as_slice().iter().zip(e) {
            assert!(close(*a, b / total, 1e-15), "{a} vs {}", b / total);
        }
        let deep = normalize_from_log(&[-1e6, -1e6 - 1.0]).unwrap();
        assert!(close(deep.as_slice()[0], 1.0 / (1.0 + (-1f64).exp()), 1e-14));
    }

    #[test]
    fn normalize_rejects_degenerate() {
        assert_eq!(
            normalize_from_log(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(SimplexError::DegenerateWeights)
        );
        assert!(normalize_from_log(&[0.0, f64::NAN]).is_err());
        assert!(normalize_from_log(&[0.0]).is_err());
        let p = normalize_from_log(&[0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn pmp_construction_validates() {
        assert!(PmpVector::new(vec![0.5, 0.6]).is_err());
        assert!(PmpVector::new(vec![1.0]).is_err());
        assert!(PmpVector::new(vec![-0.1, 1.1]).is_err());
        assert!(PmpVector::new(vec![0.5, 0.5 + 1e-10]).is_ok());
        let p = PmpVector::with_tolerance(vec![0.05, 0.91, 0.03], 0.02).unwrap();
        let sum: f64 = p.as_slice().iter().sum();
        assert!(close(sum, 1.0, 1e-12));
    }

    #[test]
    fn clamp_examples() {
        let vertex = PmpVector::new(vec![1.0, 0.0]).unwrap();
        let c = clamp_to_interior(&vertex, 1e-9).unwrap();
        assert!(c.as_slice()[0] < 1.0);
        assert!(c.as_slice()[1] > 0.0);
        assert!(close(c.as_slice()[1], 1e-9 / (1.0 + 1e-9), 1e-24));

        let half = PmpVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(clamp_to_interior(&half, 1e-9).unwrap().as_slice(), &[0.5, 0.5]);

        let v3 = PmpVector::one_hot(3, 0).unwrap();
        let c3 = clamp_to_interior(&v3, 0.01).unwrap();
        let expected = [1.0 / 1.02, 0.01 / 1.02, 0.01 / 1.02];
        for (a, b) in c3.as_slice().iter().zip(expected) {
            assert!(close(*a, b, 1e-15));
        }
        assert!(close(c3.as_slice()[0], 0.9804, 1e-4));
        assert!(clamp_to_interior(&v3, 0.5).is_err());
        assert!(clamp_to_interior(&v3, 0.0).is_err());
    }

    #[test]
    fn alr_examples() {
        let u = clamp_to_interior(&PmpVector::uniform(3).unwrap(), 1e-9).unwrap();
        for z in alr(&u) {
            assert!(z.abs() < 1e-15);
        }
        let p = clamp_to_interior(&PmpVector::new(vec![0.5, 0.25, 0.25]).unwrap(), 1e-9).unwrap();
        let z = alr(&p);
        assert!(close(z[0], 2f64.ln(), 1e-15));
        assert!(close(z[1], 0.0, 1e-15));

        let uni = alr_inv(&[0.0, 0.0]);
        for v in uni.as_slice() {
            assert!(close(*v, 1.0 / 3.0, 1e-15));
        }
        // softmax(10, -10, 0) evaluated with 20-digit constants
        let e10 = 22_026.465_794_806_718;
        let em10 = 4.539_992_976_248_485e-5;
        let denom = e10 + em10 + 1.0;
        let q = alr_inv(&[10.0, -10.0]);
        let expected = [e10 / denom, em10 / denom, 1.0 / denom];
        for (a, b) in q.as_slice().iter().zip(expected) {
            assert!(close(*a, b, 1e-15), "{a} vs {b}");
        }
        assert!(close(q.as_slice()[0], 0.99995, 1e-5));
        assert!(close(q.as_slice()[1], 2.06e-9, 1e-11));
        assert!(close(q.as_slice()[2], 4.54e-5, 1e-7));
    }

    #[test]
    fn dirichlet_density_examples() {
        let flat = DirichletParams::new(vec![1.0; 4]).unwrap();
        let p = clamp_to_interior(&PmpVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(), 1e-9)
            .unwrap();
        assert!(close(flat.logpdf(&p).unwrap(), 6f64.ln(), 1e-12));

        let beta22 = DirichletParams::new(vec![2.0, 2.0]).unwrap();
        let half = clamp_to_interior(&PmpVector::uniform(2).unwrap(), 1e-9).unwrap();
        assert!(close(dirichlet_logpdf(&half, &beta22).unwrap(), 1.5f64.ln(), 1e-12));

        let wrong = DirichletParams::new(vec![1.0; 3]).unwrap();
        assert!(matches!(
            wrong.logpdf(&half),
            Err(SimplexError::DimensionMismatch { .. })
        ));
        assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn logistic_normal_examples() {
        let params =
            LogisticNormalParams::new(DVector::from_vec(vec![0.0]), DMatrix::identity(1, 1))
                .unwrap();
        let half = clamp_to_interior(&PmpVector::uniform(2).unwrap(), 1e-9).unwrap();
        let expected = -(2.0 * std::f64::consts::PI).sqrt().ln() - 0.25f64.ln();
        assert!(close(logistic_normal_logpdf(&half, &params).unwrap(), expected, 1e-12));

        // symmetric under swapping the two coordinates
        let a = clamp_to_interior(&PmpVector::new(vec![0.3, 0.7]).unwrap(), 1e-9).unwrap();
        let b = clamp_to_interior(&PmpVector::new(vec![0.7, 0.3]).unwrap(), 1e-9).unwrap();
        assert!(close(params.logpdf(&a).unwrap(), params.logpdf(&b).unwrap(), 1e-12));
    }

    #[test]
    fn covariance_validation() {
        let mu = DVector::from_vec(vec![0.0, 0.0]);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            LogisticNormalParams::new(mu.clone(), asym),
            Err(SimplexError::AsymmetricCovariance(_))
        ));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            LogisticNormalParams::new(mu.clone(), indefinite),
            Err(SimplexError::NotPositiveDefinite)
        );
        let upper = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert_eq!(
            LogisticNormalParams::from_cholesky(mu, upper),
            Err(SimplexError::InvalidCholesky)
        );
    }

    #[test]
    fn dirichlet_mean_examples() {
        let m = dirichlet_mean(&DirichletParams::new(vec![2.0, 2.0, 2.0]).unwrap());
        for v in m.as_slice() {
            assert!(close(*v, 1.0 / 3.0, 1e-15));
        }
        let m2 = DirichletParams::new(vec![1.0, 3.0]).unwrap().mean();
        assert_eq!(m2.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn dirichlet_mean_matches_sampling() {
        let params = DirichletParams::new(vec![3.0, 2.0, 4.0]).unwrap();
        let mut rng = task_rng(11, "dirichlet-mean", 0);
        let n = 1_000_000;
        let mut sums = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for _ in 0..n {
            let p = params.sample(&mut rng);
            for j in 0..3 {
                sums[j] += p.as_slice()[j];
                sq[j] += p.as_slice()[j].powi(2);
            }
        }
        let mean = params.mean();
        for j in 0..3 {
            let m = sums[j] / n as f64;
            let var = sq[j] / n as f64 - m * m;
            let se = (var / n as f64).sqrt();
            assert!((m - mean.as_slice()[j]).abs() < 3.0 * se, "component {j}");
        }
    }

    #[test]
    fn serde_roundtrip_rejects_invalid() {
        let p: PmpVector = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<PmpVector>("[0.5, 0.6]").is_err());
        let ln = LogisticNormalParams::new(
            DVector::from_vec(vec![0.3, -0.2]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        )
        .unwrap();
        let json = serde_json::to_string(&ln).unwrap();
        let back: LogisticNormalParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ln);
    }

    fn interior_point(parts: usize) -> impl Strategy<Value = InteriorPmpVector> {
        prop::collection::vec(0.001f64..1.0, parts).prop_map(|raw| {
            let sum: f64 = raw.iter().sum();
            let p = PmpVector::new(raw.iter().map(|v| v / sum).collect()).unwrap();
            clamp_to_interior(&p, 1e-9).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn alr_roundtrip(p in (2usize..6).prop_flat_map(interior_point)) {
            let back = alr_inv(&alr(&p));
            for (a, b) in back.as_slice().iter().zip(p.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn normalize_shift_invariant(
            w in prop::collection::vec(-50.0f64..50.0, 2..6),
            c in -1e3f64..1e3,
        ) {
            let a = normalize_from_log(&w).unwrap();
            let shifted: Vec<f64> = w.iter().map(|v| v + c).collect();
            let b = normalize_from_log(&shifted).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let sum: f64 = a.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn clamp_is_idempotent_on_interior(p in interior_point(3)) {
            let again = clamp_to_interior(&p.to_pmp(), 1e-9).unwrap();
            prop_assert_eq!(again.as_slice(), p.as_slice());
        }
    }
}
