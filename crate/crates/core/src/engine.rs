//! Posterior model probabilities and level-2 PMP sampling.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Dataset, GenerativeModel, ModelError};
use crate::rng::task_rng;
use crate::simplex::{normalize_from_log, PmpVector, SimplexError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("a model set needs at least two models, got {0}")]
    TooFewModels(usize),
    #[error("prior has {prior} entries for {models} models")]
    PriorLength { prior: usize, models: usize },
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
    #[error("model {model} returned a NaN log marginal likelihood")]
    NanMarginal { model: String },
    #[error("model {model}: {source}")]
    Model { model: String, source: ModelError },
    #[error("simulation {k}: {source}")]
    Task { k: usize, source: Box<EngineError> },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed PMP sample file: {0}")]
    Format(String),
}

/// Candidate models `M_1, …, M_J` with prior model probabilities.
#[derive(Debug, Clone)]
pub struct ModelSet {
    models: Vec<Arc<dyn GenerativeModel>>,
    prior: PmpVector,
}

impl ModelSet {
    /// Uniform prior `1/J`.
    pub fn new(models: Vec<Arc<dyn GenerativeModel>>) -> Result<Self, EngineError> {
        if models.len() < 2 {
            return Err(EngineError::TooFewModels(models.len()));
        }
        let prior = PmpVector::uniform(models.len())?;
        Ok(ModelSet { models, prior })
    }

    pub fn with_prior(
        models: Vec<Arc<dyn GenerativeModel>>,
        prior: PmpVector,
    ) -> Result<Self, EngineError> {
        if models.len() < 2 {
            return Err(EngineError::TooFewModels(models.len()));
        }
        if prior.parts() != models.len() {
            return Err(EngineError::PriorLength {
                prior: prior.parts(),
                models: models.len(),
            });
        }
        Ok(ModelSet { models, prior })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[Arc<dyn GenerativeModel>] {
        &self.models
    }

    pub fn prior(&self) -> &PmpVector {
        &self.prior
    }

    pub fn names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.name().to_string()).collect()
    }
}

/// `p(M_j | y) ∝ p(y | M_j) p(M_j)`.
pub fn compute_pmps(set: &ModelSet, y: &Dataset) -> Result<PmpVector, EngineError> {
    let mut log_post = Vec::with_capacity(set.len());
    for (model, prior) in set.models.iter().zip(set.prior.as_slice()) {
        let lml = model.log_marginal(y).map_err(|source| EngineError::Model {
            model: model.name().to_string(),
            source,
        })?;
        if lml.is_nan() {
            return Err(EngineError::NanMarginal {
                model: model.name().to_string(),
            });
        }
        log_post.push(lml + prior.ln());
    }
    Ok(normalize_from_log(&log_post)?)
}

/// How the true model of each simulated data set is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    /// `M* ~ p(M)`.
    #[default]
    Prior,
    /// `M*⁽ᵏ⁾ = M_{(k mod J) + 1}`, a balanced design.
    Stratified,
}

/// Output of level-2 sampling: `{(π̃⁽ᵏ⁾, M*⁽ᵏ⁾)}`. Labels are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPmpSample {
    pub pmps: Vec<PmpVector>,
    pub labels: Vec<usize>,
    pub n_obs: usize,
    pub seed: u64,
    pub model_names: Vec<String>,
}

/// Sidecar metadata written next to the sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub models: Vec<String>,
}

fn draw_label<R: Rng>(prior: &PmpVector, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in prior.as_slice().iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // rounding left u above the cumulative sum; take the last positive entry
    prior
        .as_slice()
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(prior.parts() - 1)
}

/// Algorithm 1: for each `k`, draw `M*`, simulate `N` observations from
/// its prior predictive and record the PMPs of the simulated data.
///
/// Task `k` uses its own RNG stream, so output is independent of the
/// number of worker threads.
pub fn run_level2(
    set: &ModelSet,
    k: usize,
    n: usize,
    seed: u64,
    allocation: Allocation,
) -> Result<LabeledPmpSample, EngineError> {
    if k == 0 {
        return Err(EngineError::NonPositive("K"));
    }
    if n == 0 {
        return Err(EngineError::NonPositive("N"));
    }
    let results: Vec<(PmpVector, usize)> = (0..k)
        .into_par_iter()
        .map(|task| {
            let mut rng = task_rng(seed, "level2", task as u64);
            let label = match allocation {
                Allocation::Prior => draw_label(&set.prior, &mut rng),
                Allocation::Stratified => task % set.len(),
            };
            let model = &set.models[label];
            let wrap = |source| EngineError::Task {
                k: task,
                source: Box::new(source),
            };
            let data = model.simulate(&mut rng, n).map_err(|source| {
                wrap(EngineError::Model {
                    model: model.name().to_string(),
                    source,
                })
            })?;
            let pmp = compute_pmps(set, &data).map_err(wrap)?;
            Ok((pmp, label))
        })
        .collect::<Result<_, EngineError>>()?;
    let (pmps, labels) = results.into_iter().unzip();
    Ok(LabeledPmpSample {
        pmps,
        labels,
        n_obs: n,
        seed,
        model_names: set.names(),
    })
}

impl LabeledPmpSample {
    pub fn len(&self) -> usize {
        self.pmps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmps.is_empty()
    }

    pub fn parts(&self) -> usize {
        self.model_names.len()
    }

    pub fn metadata(&self) -> SampleMetadata {
        SampleMetadata {
            seed: self.seed,
            k: self.len(),
            n: self.n_obs,
            models: self.model_names.clone(),
        }
    }

    /// `k,true_model,pi_1,…,pi_J` with 1-based `k` and labels.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EngineError> {
        let mut out = BufWriter::new(out);
        let header: Vec<String> = ["k".to_string(), "true_model".to_string()]
            .into_iter()
            .chain((1..=self.parts()).map(|j| format!("pi_{j}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (k, (pmp, label)) in self.pmps.iter().zip(&self.labels).enumerate() {
            write!(out, "{},{}", k + 1, label + 1)?;
            for p in pmp.as_slice() {
                write!(out, ",{p}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, csv_path: &Path) -> Result<(), EngineError> {
        self.write_csv(File::create(csv_path)?)?;
        let meta = serde_json::to_string_pretty(&self.metadata())?;
        std::fs::write(csv_path.with_extension("json"), meta + "\n")?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self, EngineError> {
        let meta: SampleMetadata =
            serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
        let sample = Self::read_csv(File::open(csv_path)?, meta)?;
        Ok(sample)
    }

    pub fn read_csv<R: Read>(input: R, meta: SampleMetadata) -> Result<Self, EngineError> {
        let parts = meta.models.len();
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.len() != parts + 2 || &headers[0] != "k" || &headers[1] != "true_model" {
            return Err(EngineError::Format(format!(
                "header does not match {parts} models"
            )));
        }
        let mut pmps = Vec::new();
        let mut labels = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |what: &str| EngineError::Format(format!("row {}: {what}", i + 1));
            let label: usize = record[1].parse().map_err(|_| bad("bad label"))?;
            if label < 1 || label > parts {
                return Err(bad("label out of range"));
            }
            let probs = record
                .iter()
                .skip(2)
                .map(|f| f.parse::<f64>().map_err(|_| bad("bad probability")))
                .collect::<Result<Vec<_>, _>>()?;
            pmps.push(PmpVector::new(probs)?);
            labels.push(label - 1);
        }
        if pmps.len() != meta.k {
            return Err(EngineError::Format(format!(
                "sidecar says K = {}, file has {} rows",
                meta.k,
                pmps.len()
            )));
        }
        Ok(LabeledPmpSample {
            pmps,
            labels,
            n_obs: meta.n,
            seed: meta.seed,
            model_names: meta.models,
        })
    }
}

/// Level-2 PMPs partitioned by the index of their true model.
#[derive(Debug, Clone, PartialEq)]
pub struct PmpGroups {
    groups: Vec<Vec<PmpVector>>,
    indices: Vec<Vec<usize>>,
}

impl PmpGroups {
    pub fn group(&self, j: usize) -> &[PmpVector] {
        &self.groups[j]
    }

    /// Positions in the original sample of the members of group `j`.
    pub fn indices(&self, j: usize) -> &[usize] {
        &self.indices[j]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Models never drawn as the true model.
    pub fn empty_groups(&self) -> Vec<usize> {
        (0..self.groups.len())
            .filter(|&j| self.groups[j].is_empty())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Partitions a sample into `J` groups, keeping the original order inside
/// each group.
pub fn group_by_true_model(sample: &LabeledPmpSample) -> PmpGroups {
    group_labeled(&sample.pmps, &sample.labels, sample.parts())
}

pub(crate) fn group_labeled(pmps: &[PmpVector], labels: &[usize], parts: usize) -> PmpGroups {
    let mut groups = vec![Vec::new(); parts];
    let mut indices = vec![Vec::new(); parts];
    for (i, (p, &l)) in pmps.iter().zip(labels).enumerate() {
        groups[l].push(p.clone());
        indices[l].push(i);
    }
    PmpGroups { groups, indices }
}
