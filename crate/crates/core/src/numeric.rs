//! Small numerical helpers shared across modules.

pub use statrs::function::gamma::ln_gamma;

/// `ln Σ exp(x_i)`, stable for large magnitudes. Empty or all `-inf`
/// input yields `-inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log of the Beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log of the multivariate Beta function `Π Γ(α_j) / Γ(Σ α_j)`.
pub fn ln_multivariate_beta(alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(total)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_handles_extremes() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = logsumexp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = logsumexp(&[1000.0, f64::NEG_INFINITY]);
        assert!((w - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn ln_beta_matches_known_values() {
        // B(2, 2) = 1/6
        assert!((ln_beta(2.0, 2.0) - (1.0f64 / 6.0).ln()).abs() < 1e-13);
        assert!((ln_multivariate_beta(&[1.0, 1.0, 1.0]) - (0.5f64).ln()).abs() < 1e-13);
    }
}
