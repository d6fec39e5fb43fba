//! Adaptive random-walk Metropolis and chain diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Settings for one RWM chain.
#[derive(Debug, Clone, Copy)]
pub struct RwmSettings {
    pub n_warmup: usize,
    /// Post-warmup iterations.
    pub n_iter: usize,
    /// Keep every `thin`-th post-warmup state.
    pub thin: usize,
    pub target_accept: f64,
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    /// Post-warmup acceptance rate.
    pub acceptance: f64,
    /// Frozen proposal standard deviations.
    pub proposal_sd: Vec<f64>,
}

/// Percentages of warmup after which the proposal factor is re-estimated.
const ADAPTATION_RESETS: [usize; 4] = [25, 45, 70, 90];

/// Runs one chain of random-walk Metropolis with a Gaussian proposal
/// `x + s·L z`.
///
/// Warmup adapts the global log-scale `ln s` by Robbins-Monro toward
/// `target_accept`. `L` starts at `initial_factor`; at each of
/// [`ADAPTATION_RESETS`] it is reset to `2.38/√d` times the Cholesky
/// factor of the empirical covariance of the preceding window (the first
/// window starts at 10 % of warmup).
pub fn run_rwm<F, R>(
    log_target: F,
    init: Vec<f64>,
    initial_factor: DMatrix<f64>,
    settings: &RwmSettings,
    rng: &mut R,
) -> Chain
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let dim = init.len();
    let mut state = init;
    let mut current = log_target(&state);
    let mut factor = initial_factor;
    let mut log_scale = 0.0f64;
    let mut proposal = vec![0.0; dim];
    let mut noise = vec![0.0; dim];

    let window_start = settings.n_warmup / 10;
    let resets: Vec<usize> = ADAPTATION_RESETS.iter().map(|f| settings.n_warmup * f / 100).collect();
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut step_count = 0usize;

    for t in 0..settings.n_warmup {
        let accepted = step(
            &log_target,
            &mut state,
            &mut current,
            &factor,
            log_scale.exp(),
            &mut proposal,
            &mut noise,
            rng,
        );
        step_count += 1;
        let gain = (1.0 + step_count as f64 / 10.0).powf(-0.6);
        log_scale += gain * (f64::from(u8::from(accepted)) - settings.target_accept);
        log_scale = log_scale.clamp(-30.0, 10.0);
        if t >= window_start {
            window.push(state.clone());
        }
        if resets.contains(&(t + 1)) {
            if let Some(l) = window_factor(&window) {
                factor = l * (2.38 / (dim as f64).sqrt());
                log_scale = 0.0;
                step_count = 0;
            }
            window.clear();
        }
    }

    let scale = log_scale.exp();
    let mut draws = Vec::with_capacity(settings.n_iter / settings.thin.max(1) + 1);
    let mut accepted_total = 0usize;
    for t in 0..settings.n_iter {
        if step(&log_target, &mut state, &mut current, &factor, scale, &mut proposal, &mut noise, rng) {
            accepted_total += 1;
        }
        if (t + 1) % settings.thin.max(1) == 0 {
            draws.push(state.clone());
        }
    }
    Chain {
        draws,
        acceptance: if settings.n_iter == 0 {
            0.0
        } else {
            accepted_total as f64 / settings.n_iter as f64
        },
        proposal_sd: factor.row_iter().map(|r| scale * r.norm()).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn step<F, R>(
    log_target: &F,
    state: &mut [f64],
    current: &mut f64,
    factor: &DMatrix<f64>,
    scale: f64,
    proposal: &mut [f64],
    noise: &mut [f64],
    rng: &mut R,
) -> bool
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    for z in noise.iter_mut() {
        *z = rng.sample(StandardNormal);
    }
    for (i, p) in proposal.iter_mut().enumerate() {
        let mut shift = 0.0;
        for (j, z) in noise.iter().enumerate().take(i + 1) {
            shift += factor[(i, j)] * z;
        }
        *p = state[i] + scale * shift;
    }
    let candidate = log_target(proposal);
    let log_u: f64 = rng.random::<f64>().ln();
    let accept = candidate.is_finite() && (log_u < candidate - *current || !current.is_finite());
    if accept {
        state.copy_from_slice(proposal);
        *current = candidate;
    }
    accept
}

/// Lower Cholesky factor of `(-∇² log_target)⁻¹` at `at`, from central
/// differences with steps `0.05·scale_i`. Falls back to `diag(scale)` when
/// the curvature is not negative definite there.
pub fn laplace_factor<F>(log_target: F, at: &[f64], scale: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = at.len();
    let fallback = DMatrix::from_diagonal(&DVector::from_column_slice(scale));
    let h: Vec<f64> = scale.iter().map(|s| 0.05 * s).collect();
    let eval = |shifts: &[(usize, f64)]| {
        let mut x = at.to_vec();
        for &(i, d) in shifts {
            x[i] += d;
        }
        log_target(&x)
    };
    let f0 = eval(&[]);
    let mut neg_hessian = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let second = (eval(&[(i, h[i])]) - 2.0 * f0 + eval(&[(i, -h[i])])) / (h[i] * h[i]);
        neg_hessian[(i, i)] = -second;
        for j in 0..i {
            let mixed = (eval(&[(i, h[i]), (j, h[j])]) - eval(&[(i, h[i]), (j, -h[j])])
                - eval(&[(i, -h[i]), (j, h[j])])
                + eval(&[(i, -h[i]), (j, -h[j])]))
                / (4.0 * h[i] * h[j]);
            neg_hessian[(i, j)] = -mixed;
            neg_hessian[(j, i)] = -mixed;
        }
    }
    if neg_hessian.iter().any(|v| !v.is_finite()) {
        return fallback;
    }
    neg_hessian
        .cholesky()
        .map(|c| c.inverse())
        .and_then(|cov| cov.cholesky())
        .map(|c| c.l())
        .unwrap_or(fallback)
}

/// Cholesky factor of the window covariance, or `None` when the window is
/// too short or a coordinate never moved.
fn window_factor(window: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = window.len();
    if n < 10 {
        return None;
    }
    let dim = window[0].len();
    let mean: Vec<f64> = (0..dim).map(|i| window.iter().map(|w| w[i]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for w in window {
        for i in 0..dim {
            for j in 0..=i {
                cov[(i, j)] += (w[i] - mean[i]) * (w[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            cov[(i, j)] /= (n - 1) as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    if (0..dim).any(|i| !(cov[(i, i)] > 0.0 && cov[(i, i)].is_finite())) {
        return None;
    }
    // a short window can leave the estimate rank-deficient
    let ridge = 1e-8 * (0..dim).map(|i| cov[(i, i)]).sum::<f64>() / dim as f64;
    for i in 0..dim {
        cov[(i, i)] += ridge;
    }
    cov.cholesky().map(|c| c.l())
}

/// Convergence and efficiency summaries across chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Post-warmup acceptance rate per chain.
    pub acceptance: Vec<f64>,
    /// Split-R̂ per unconstrained coordinate.
    pub split_rhat: Vec<f64>,
    /// Bulk effective sample size per unconstrained coordinate.
    pub ess: Vec<f64>,
    /// Set when every group member was identical.
    pub degenerate: bool,
    pub group_size: usize,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.split_rhat.iter().cloned().fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().cloned().fold(f64::NAN, f64::min)
    }
}

/// Split-R̂ of one coordinate: every chain is cut in half and the halves
/// are compared as separate chains. Chains are truncated to a common even
/// length.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split_halves(chains);
    if halves.len() < 2 || halves[0].len() < 2 {
        return f64::NAN;
    }
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let m = halves.len() as f64;
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0) / 2 * 2;
    let half = len / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..len]])
        .collect()
}

/// Multi-chain effective sample size with Geyer's initial monotone
/// sequence on the pooled autocorrelation.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    let m = chains.len();
    if m == 0 || len < 4 {
        return f64::NAN;
    }
    let n = len as f64;
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..len]).collect();
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let acov: Vec<Vec<f64>> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| autocovariance(c, *mu))
        .collect();
    let within = acov.iter().map(|a| a[0] * n / (n - 1.0)).sum::<f64>() / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let between = if m > 1 {
        n / (m as f64 - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>()
    } else {
        0.0
    };
    let var_plus = (n - 1.0) / n * within + between / n;
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |t: usize| {
        let mean_acov = acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (within - mean_acov) / var_plus
    };
    // pair sums Γ_k = ρ_{2k} + ρ_{2k+1}, truncated at the first negative one
    // and forced to be nonincreasing
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < len {
        let mut pair = rho(2 * k) + rho(2 * k + 1);
        if pair < 0.0 {
            break;
        }
        pair = pair.min(prev);
        prev = pair;
        sum += pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / (m as f64 * n).log10().max(1.0));
    m as f64 * n / tau
}

fn autocovariance(x: &[f64], mean: f64) -> Vec<f64> {
    let n = x.len();
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..n)
        .map(|lag| {
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, Normal};

    fn surrogate() -> (DVector<f64>, DMatrix<f64>) {
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let cov = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.3, 0.0, 0.1, //
                0.3, 0.5, 0.1, 0.0, //
                0.0, 0.1, 2.0, -0.4, //
                0.1, 0.0, -0.4, 0.8,
            ],
        );
        (mean, cov)
    }

    #[test]
    fn matches_gaussian_surrogate() {
        let (mean, cov) = surrogate();
        let prec = cov.clone().try_inverse().unwrap();
        let target = |x: &[f64]| {
            let d = DVector::from_column_slice(x) - &mean;
            -0.5 * (d.transpose() * &prec * &d)[(0, 0)]
        };
        let settings = RwmSettings {
            n_warmup: 2000,
            n_iter: 40_000,
            thin: 1,
            target_accept: 0.3,
        };
        let chains: Vec<Chain> = (0..4)
            .map(|c| {
                let mut rng = task_rng(3, "surrogate", c);
                run_rwm(target, vec![0.0; 4], DMatrix::from_diagonal_element(4, 4, 0.5), &settings, &mut rng)
            })
            .collect();
        for c in &chains {
            assert!((0.15..0.45).contains(&c.acceptance), "{}", c.acceptance);
        }
        for i in 0..4 {
            let coord: Vec<Vec<f64>> = chains.iter().map(|c| c.draws.iter().map(|d| d[i]).collect()).collect();
            assert!(split_rhat(&coord) < 1.05);
            let ess = effective_sample_size(&coord);
            let all: Vec<f64> = coord.concat();
            let m = all.iter().sum::<f64>() / all.len() as f64;
            let mcse = (cov[(i, i)] / ess).sqrt();
            assert!((m - mean[i]).abs() < 3.0 * mcse, "coord {i}: {m} vs {} (mcse {mcse})", mean[i]);
            for j in 0..=i {
                // MCSE of a product moment from the ESS of the product series
                let prod: Vec<Vec<f64>> = chains
                    .iter()
                    .map(|c| c.draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).collect())
                    .collect();
                let flat = prod.concat();
                let pm = flat.iter().sum::<f64>() / flat.len() as f64;
                let pv = flat.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / (flat.len() - 1) as f64;
                let se = (pv / effective_sample_size(&prod)).sqrt();
                assert!((pm - cov[(i, j)]).abs() < 3.0 * se, "cov {i}{j}: {pm} vs {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn rhat_detects_disagreeing_chains() {
        let mut rng = task_rng(1, "rhat", 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let good: Vec<Vec<f64>> = (0..4).map(|_| (0..1000).map(|_| normal.sample(&mut rng)).collect()).collect();
        assert!(split_rhat(&good) < 1.01);
        let ess = effective_sample_size(&good);
        assert!(ess > 3000.0 && ess < 5000.0, "{ess}");
        let mut bad = good.clone();
        for v in &mut bad[0] {
            *v += 3.0;
        }
        assert!(split_rhat(&bad) > 1.1);
    }

    #[test]
    fn chains_are_reproducible() {
        let settings = RwmSettings {
            n_warmup: 200,
            n_iter: 200,
            thin: 2,
            target_accept: 0.3,
        };
        let run = || {
            let mut rng = task_rng(5, "repro", 0);
            run_rwm(|x: &[f64]| -x[0] * x[0], vec![1.0], DMatrix::from_element(1, 1, 1.0), &settings, &mut rng).draws
        };
        let a = run();
        assert_eq!(a.len(), 100);
        assert_eq!(a, run());
    }
}
