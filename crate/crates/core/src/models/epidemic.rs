//! SIR/SEIR compartment models with Poisson or negative-binomial
//! observation noise on the infected compartment.
//!
//! The ODEs are integrated with fixed-step RK4 (0.05 day by default) and read
//! out once per day. The log marginal likelihood is estimated by importance
//! sampling with the prior as proposal.

use std::path::Path;

use rand::RngCore;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{wrong_kind, Dataset, GenerativeModel, ModelError};
use crate::numeric::{ln_gamma, logsumexp};
use crate::rng::task_rng;

/// Students confined to bed, 22 January to 4 February 1978.
pub const BOARDING_SCHOOL_IN_BED: [u64; 14] =
    [3, 8, 26, 76, 225, 298, 258, 233, 189, 128, 68, 29, 14, 4];

pub const BOARDING_SCHOOL_POPULATION: u64 = 763;

/// Base RK4 step in days.
pub const BASE_STEP: f64 = 0.05;

/// Steps are shortened so that `step × fastest rate` stays below this.
const MAX_RATE_STEP: f64 = 0.5;

const MAX_STEPS_PER_DAY: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compartments {
    Sir,
    Seir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationModel {
    Poisson,
    NegativeBinomial,
}

/// `|Normal(mean, sd)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfNormalPrior {
    pub mean: f64,
    pub sd: f64,
}

impl HalfNormalPrior {
    fn validate(&self, what: &str) -> Result<(), ModelError> {
        if !(self.sd > 0.0 && self.sd.is_finite() && self.mean.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "{what} prior needs a finite mean and positive sd"
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        Normal::new(self.mean, self.sd)
            .expect("validated prior")
            .sample(rng)
            .abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicModel {
    pub name: String,
    pub compartments: Compartments,
    pub likelihood: ObservationModel,
    pub beta: HalfNormalPrior,
    pub gamma: HalfNormalPrior,
    /// Incubation rate prior; SEIR only.
    pub eta: Option<HalfNormalPrior>,
    /// Negative-binomial dispersion prior.
    pub phi: Option<HalfNormalPrior>,
    pub population: u64,
    pub initial_infected: u64,
    /// Number of prior draws in the importance-sampling estimator.
    pub n_is: usize,
    /// Seed of the importance-sampling estimator.
    pub is_seed: u64,
}

/// Daily states `(S, E, I, R)` at days `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<[f64; 4]>,
    /// Largest `|S + E + I + R - population|` over every RK4 step.
    pub max_conservation_error: f64,
    pub steps_per_day: usize,
}

impl Trajectory {
    pub fn infected(&self) -> Vec<f64> {
        self.states.iter().map(|s| s[2]).collect()
    }
}

/// Importance-sampling estimate of a log marginal likelihood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsEstimate {
    pub log_marginal: f64,
    /// Delta-method standard error of `log_marginal`.
    pub log_stderr: f64,
    /// Kish effective sample size of the importance weights.
    pub ess: f64,
    /// Number of draws with a finite log-likelihood.
    pub finite_draws: usize,
    /// Set when no draw can explain the data; `log_marginal` is then `-inf`.
    pub degenerate: bool,
}

impl EpidemicModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.beta.validate("beta")?;
        self.gamma.validate("gamma")?;
        match (self.compartments, &self.eta) {
            (Compartments::Seir, Some(eta)) => eta.validate("eta")?,
            (Compartments::Seir, None) => {
                return Err(ModelError::InvalidParameter("SEIR model needs an eta prior".into()))
            }
            (Compartments::Sir, Some(_)) => {
                return Err(ModelError::InvalidParameter("SIR model takes no eta prior".into()))
            }
            (Compartments::Sir, None) => {}
        }
        match (self.likelihood, &self.phi) {
            (ObservationModel::NegativeBinomial, Some(phi)) => phi.validate("phi")?,
            (ObservationModel::NegativeBinomial, None) => {
                return Err(ModelError::InvalidParameter(
                    "negative-binomial model needs a phi prior".into(),
                ))
            }
            (ObservationModel::Poisson, Some(_)) => {
                return Err(ModelError::InvalidParameter("Poisson model takes no phi prior".into()))
            }
            (ObservationModel::Poisson, None) => {}
        }
        if self.initial_infected < 1 || self.initial_infected > self.population {
            return Err(ModelError::InvalidParameter(format!(
                "need 1 <= initial infected ({}) <= population ({})",
                self.initial_infected, self.population
            )));
        }
        if self.n_is == 0 {
            return Err(ModelError::InvalidParameter("n_is must be positive".into()));
        }
        Ok(())
    }

    fn draw_parameters(&self, rng: &mut dyn RngCore) -> DrawnParameters {
        DrawnParameters {
            beta: self.beta.sample(rng),
            gamma: self.gamma.sample(rng),
            eta: self.eta.map(|p| p.sample(rng)),
            phi: self.phi.map(|p| p.sample(rng)),
        }
    }

    fn log_likelihood(&self, y: &[u64], params: &DrawnParameters) -> f64 {
        let Ok(traj) = epidemic_integrate(self, params.beta, params.gamma, params.eta, y.len())
        else {
            return f64::NEG_INFINITY;
        };
        let infected = traj.infected();
        match self.likelihood {
            ObservationModel::Poisson => y
                .iter()
                .zip(&infected)
                .map(|(&k, &mu)| poisson_logpmf(k, mu))
                .sum(),
            ObservationModel::NegativeBinomial => {
                let phi = params.phi.expect("validated");
                y.iter()
                    .zip(&infected)
                    .map(|(&k, &mu)| neg_binomial_logpmf(k, mu, phi))
                    .sum()
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct DrawnParameters {
    beta: f64,
    gamma: f64,
    eta: Option<f64>,
    phi: Option<f64>,
}

/// The three candidate models for the 1978 boarding-school outbreak:
/// SIR/Poisson, SEIR/Poisson and SEIR/negative-binomial.
pub fn boarding_school_models(n_is: usize, is_seed: u64) -> Vec<EpidemicModel> {
    let hn = |mean, sd| HalfNormalPrior { mean, sd };
    let base = |name: &str, compartments, likelihood, beta, gamma, eta, phi| EpidemicModel {
        name: name.to_string(),
        compartments,
        likelihood,
        beta,
        gamma,
        eta,
        phi,
        population: BOARDING_SCHOOL_POPULATION,
        initial_infected: 1,
        n_is,
        is_seed,
    };
    vec![
        base("M1", Compartments::Sir, ObservationModel::Poisson, hn(2.0, 0.1), hn(0.4, 0.1), None, None),
        base("M2", Compartments::Seir, ObservationModel::Poisson, hn(3.0, 0.1), hn(0.5, 0.1), Some(hn(3.0, 0.1)), None),
        base(
            "M3",
            Compartments::Seir,
            ObservationModel::NegativeBinomial,
            hn(3.0, 0.1),
            hn(0.5, 0.1),
            Some(hn(3.0, 0.1)),
            Some(hn(100.0, 1.0)),
        ),
    ]
}

fn poisson_logpmf(k: u64, mu: f64) -> f64 {
    let mu = mu.max(0.0);
    let kf = k as f64;
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    kf * mu.ln() - mu - ln_gamma(kf + 1.0)
}

/// Mean `mu`, dispersion `phi`, variance `mu + mu²/phi`.
fn neg_binomial_logpmf(k: u64, mu: f64, phi: f64) -> f64 {
    let mu = mu.max(0.0);
    let kf = k as f64;
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_gamma(kf + phi) - ln_gamma(phi) - ln_gamma(kf + 1.0)
        + phi * (phi / (phi + mu)).ln()
        + kf * (mu / (phi + mu)).ln()
}

fn derivative(
    state: &[f64; 4],
    compartments: Compartments,
    beta: f64,
    gamma: f64,
    eta: f64,
    population: f64,
) -> [f64; 4] {
    let [s, e, i, _] = *state;
    let infection = beta * s * i / population;
    match compartments {
        Compartments::Sir => [-infection, 0.0, infection - gamma * i, gamma * i],
        Compartments::Seir => [-infection, infection - eta * e, eta * e - gamma * i, gamma * i],
    }
}

fn axpy(state: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    [
        state[0] + h * k[0],
        state[1] + h * k[1],
        state[2] + h * k[2],
        state[3] + h * k[3],
    ]
}

/// RK4 solution of the compartment ODEs read out at days `1..=days`.
///
/// The step is [`BASE_STEP`] unless the rates require a shorter one; the
/// day is then split into enough steps to keep `h × max(β, γ, η) ≤ 0.5`.
pub fn epidemic_integrate(
    model: &EpidemicModel,
    beta: f64,
    gamma: f64,
    eta: Option<f64>,
    days: usize,
) -> Result<Trajectory, ModelError> {
    let eta_value = match model.compartments {
        Compartments::Sir => 0.0,
        Compartments::Seir => eta.ok_or_else(|| {
            ModelError::InvalidParameter("SEIR integration needs eta".into())
        })?,
    };
    for (what, v) in [("beta", beta), ("gamma", gamma), ("eta", eta_value)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("{what} = {v}")));
        }
    }
    if model.initial_infected < 1 || model.initial_infected > model.population {
        return Err(ModelError::InvalidParameter(
            "initial infected must lie in 1..=population".into(),
        ));
    }
    let population = model.population as f64;
    let fastest = beta.max(gamma).max(eta_value);
    let base_steps = (1.0 / BASE_STEP).round() as usize;
    let needed = (fastest / MAX_RATE_STEP).ceil();
    if needed > MAX_STEPS_PER_DAY as f64 {
        return Err(ModelError::Integration(format!(
            "rates up to {fastest} would need a step below {:e} days",
            1.0 / MAX_STEPS_PER_DAY as f64
        )));
    }
    let steps_per_day = base_steps.max(needed as usize);
    let h = 1.0 / steps_per_day as f64;

    let i0 = model.initial_infected as f64;
    let mut state = [population - i0, 0.0, i0, 0.0];
    let mut states = Vec::with_capacity(days);
    let mut max_err = 0.0f64;
    let f = |s: &[f64; 4]| derivative(s, model.compartments, beta, gamma, eta_value, population);
    for _day in 0..days {
        for _ in 0..steps_per_day {
            let k1 = f(&state);
            let k2 = f(&axpy(&state, h / 2.0, &k1));
            let k3 = f(&axpy(&state, h / 2.0, &k2));
            let k4 = f(&axpy(&state, h, &k3));
            for c in 0..4 {
                state[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            if state.iter().any(|v| !v.is_finite() || *v < -1e-6 * population) {
                return Err(ModelError::Integration(format!(
                    "state left the feasible region: {state:?}"
                )));
            }
            max_err = max_err.max((state.iter().sum::<f64>() - population).abs());
        }
        states.push(state);
    }
    Ok(Trajectory {
        states,
        max_conservation_error: max_err,
        steps_per_day,
    })
}

/// Prior importance-sampling estimate of `ln p(y | M)` with `n_is` draws
/// from the stream keyed by `seed`.
pub fn epidemic_log_marginal(
    model: &EpidemicModel,
    y: &[u64],
    n_is: usize,
    seed: u64,
) -> Result<IsEstimate, ModelError> {
    model.validate()?;
    if n_is == 0 {
        return Err(ModelError::InvalidParameter("n_is must be positive".into()));
    }
    if y.is_empty() {
        return Err(ModelError::Shape("no observations".into()));
    }
    let mut rng = task_rng(seed, "importance-sampling", 0);
    let draws: Vec<DrawnParameters> = (0..n_is).map(|_| model.draw_parameters(&mut rng)).collect();
    let log_lik: Vec<f64> = draws
        .par_iter()
        .map(|d| model.log_likelihood(y, d))
        .collect();
    Ok(summarize_log_weights(&log_lik))
}

fn summarize_log_weights(log_w: &[f64]) -> IsEstimate {
    let n = log_w.len() as f64;
    let finite_draws = log_w.iter().filter(|v| v.is_finite()).count();
    let lse = logsumexp(log_w);
    if lse == f64::NEG_INFINITY {
        return IsEstimate {
            log_marginal: f64::NEG_INFINITY,
            log_stderr: f64::NAN,
            ess: 0.0,
            finite_draws,
            degenerate: true,
        };
    }
    let lse2 = logsumexp(&log_w.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    // Σw² / (Σw)²
    let concentration = (lse2 - 2.0 * lse).exp();
    let ess = 1.0 / concentration;
    let rel_var = (n * concentration - 1.0).max(0.0);
    IsEstimate {
        log_marginal: lse - n.ln(),
        log_stderr: (rel_var / n).sqrt(),
        ess,
        finite_draws,
        degenerate: false,
    }
}

impl GenerativeModel for EpidemicModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn simulate(&self, rng: &mut dyn RngCore, n: usize) -> Result<Dataset, ModelError> {
        self.validate()?;
        let params = self.draw_parameters(rng);
        let traj = epidemic_integrate(self, params.beta, params.gamma, params.eta, n)?;
        let counts = traj
            .infected()
            .into_iter()
            .map(|mu| {
                let mu = mu.max(0.0);
                let rate = match self.likelihood {
                    ObservationModel::Poisson => mu,
                    ObservationModel::NegativeBinomial => {
                        let phi = params.phi.expect("validated");
                        if mu == 0.0 {
                            0.0
                        } else {
                            Gamma::new(phi, mu / phi)
                                .map_err(|e| ModelError::InvalidParameter(e.to_string()))?
                                .sample(rng)
                        }
                    }
                };
                if rate <= 0.0 {
                    Ok(0)
                } else {
                    let k: f64 = Poisson::new(rate)
                        .map_err(|e| ModelError::InvalidParameter(e.to_string()))?
                        .sample(rng);
                    Ok(k as u64)
                }
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Dataset::Counts(counts))
    }

    fn log_marginal(&self, data: &Dataset) -> Result<f64, ModelError> {
        match data {
            Dataset::Counts(y) => {
                Ok(epidemic_log_marginal(self, y, self.n_is, self.is_seed)?.log_marginal)
            }
            other => Err(wrong_kind(&self.name, "count", other)),
        }
    }
}

/// Reads a `day,in_bed` CSV into daily counts ordered by day.
pub fn read_daily_counts(path: impl AsRef<Path>) -> Result<Vec<u64>, ModelError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| ModelError::Shape(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| ModelError::Shape(e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "day" || &headers[1] != "in_bed" {
        return Err(ModelError::Shape(format!(
            "expected header `day,in_bed`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ModelError::Shape(e.to_string()))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| ModelError::Shape(format!("row {}: {e}", i + 1)))
        };
        rows.push((parse(&record[0])?, parse(&record[1])?));
    }
    rows.sort_by_key(|r| r.0);
    Ok(rows.into_iter().map(|r| r.1).collect())
}
