use rand::RngCore;
use rand_distr::{Bernoulli, Beta, Distribution};

use super::{wrong_kind, Dataset, GenerativeModel, ModelError};
use crate::numeric::ln_beta;

/// `θ ~ Beta(α, β)`, `y_n ~ Bernoulli(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBernoulliModel {
    name: String,
    alpha: f64,
    beta: f64,
}

impl BetaBernoulliModel {
    pub fn new(name: impl Into<String>, alpha: f64, beta: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "Beta prior needs positive finite shapes, got ({alpha}, {beta})"
            )));
        }
        Ok(Self {
            name: name.into(),
            alpha,
            beta,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// `ln B(α + s, β + N - s) - ln B(α, β)` with `s = Σ y_n`.
pub fn beta_bernoulli_log_marginal(model: &BetaBernoulliModel, y: &[u8]) -> Result<f64, ModelError> {
    let mut successes = 0usize;
    for (index, &value) in y.iter().enumerate() {
        match value {
            0 => {}
            1 => successes += 1,
            _ => return Err(ModelError::NonBinary { index, value }),
        }
    }
    let s = successes as f64;
    let f = (y.len() - successes) as f64;
    Ok(ln_beta(model.alpha + s, model.beta + f) - ln_beta(model.alpha, model.beta))
}

impl GenerativeModel for BetaBernoulliModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn simulate(&self, rng: &mut dyn RngCore, n: usize) -> Result<Dataset, ModelError> {
        let theta = Beta::new(self.alpha, self.beta)
            .map_err(|e| ModelError::InvalidParameter(e.to_string()))?
            .sample(rng);
        let flip = Bernoulli::new(theta).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
        Ok(Dataset::Binary(
            (0..n).map(|_| u8::from(flip.sample(rng))).collect(),
        ))
    }

    fn log_marginal(&self, data: &Dataset) -> Result<f64, ModelError> {
        match data {
            Dataset::Binary(y) => beta_bernoulli_log_marginal(self, y),
            other => Err(wrong_kind(&self.name, "binary", other)),
        }
    }
}
