//! PMP files produced outside this crate, e.g. by an amortized neural
//! approximator.
//!
//! Format: CSV with header `pi_1,...,pi_J` and an optional trailing
//! `true_model` column holding 1-based labels (empty cells allowed).

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::simplex::PmpVector;

/// Rows whose sum is off by at most this much are renormalized.
pub const EXTERNAL_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("cannot read PMP file: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("file contains no rows")]
    Empty,
}

/// Validated external PMPs with optional 0-based true-model labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPmpSource {
    parts: usize,
    pmps: Vec<PmpVector>,
    labels: Vec<Option<usize>>,
}

impl ExternalPmpSource {
    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn len(&self) -> usize {
        self.pmps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmps.is_empty()
    }

    pub fn pmps(&self) -> &[PmpVector] {
        &self.pmps
    }

    /// 0-based labels; `None` where the file left the cell empty or has no
    /// label column.
    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// True when every row carries a label.
    pub fn fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }
}

pub fn load_external_pmps(path: impl AsRef<Path>) -> Result<ExternalPmpSource, ExternalError> {
    let file = std::fs::File::open(path)?;
    read_external_pmps(file)
}

pub fn read_external_pmps<R: Read>(input: R) -> Result<ExternalPmpSource, ExternalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let labeled = names.last() == Some(&"true_model");
    let parts = if labeled { names.len() - 1 } else { names.len() };
    if parts < 2 {
        return Err(ExternalError::Header(format!(
            "need at least pi_1,pi_2, found `{}`",
            names.join(",")
        )));
    }
    for (j, name) in names.iter().take(parts).enumerate() {
        if *name != format!("pi_{}", j + 1) {
            return Err(ExternalError::Header(format!(
                "column {} is `{name}`, expected `pi_{}`",
                j + 1,
                j + 1
            )));
        }
    }

    let mut pmps = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let row_err = |message: String| ExternalError::Row { row, message };
        let expected = if labeled { parts + 1 } else { parts };
        if record.len() != expected {
            return Err(row_err(format!(
                "expected {expected} fields, found {}",
                record.len()
            )));
        }
        let probs = record
            .iter()
            .take(parts)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| row_err(format!("cannot parse `{f}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pmp = PmpVector::with_tolerance(probs, EXTERNAL_SUM_TOLERANCE)
            .map_err(|e| row_err(e.to_string()))?;
        let label = if labeled {
            match &record[parts] {
                "" => None,
                s => {
                    let q: usize = s
                        .parse()
                        .map_err(|e| row_err(format!("bad label `{s}`: {e}")))?;
                    if q < 1 || q > parts {
                        return Err(row_err(format!("label {q} outside 1..={parts}")));
                    }
                    Some(q - 1)
                }
            }
        } else {
            None
        };
        pmps.push(pmp);
        labels.push(label);
    }
    if pmps.is_empty() {
        return Err(ExternalError::Empty);
    }
    Ok(ExternalPmpSource {
        parts,
        pmps,
        labels,
    })
}
