//! Subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use metapmp::meta::{fit, Family, MetaPosterior};
use metapmp::mixture::{build_mixture_with, MixtureMode, MixtureSummary};
use metapmp::models::{load_external_pmps, read_daily_counts, Dataset};
use metapmp::rng::derive_seed;
use metapmp::{compute_pmps, group_by_true_model, run_level2, Allocation, LabeledPmpSample, PmpVector};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{parse_observed, parse_observed_str, ModelSpec, PipelineConfig};
use crate::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "metapmp", version, about = "Meta-uncertainty in Bayesian model comparison")]
pub struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate labeled PMPs from the model set (writes pmps.csv, pmps.json).
    Simulate(SimulateArgs),
    /// Fit one meta-model per true model (writes meta_<j>.json).
    Fit(FitArgs),
    /// Build the predictive mixture for observed PMPs (writes mixture.json, grid.csv).
    Mix(MixArgs),
    /// Run simulate, fit and mix, then write manifest.json.
    Pipeline(PipelineArgs),
    /// Convert an external PMP file into pmps.csv and pmps.json.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Allocate K/J simulations to each model instead of drawing labels.
    #[arg(long)]
    pub stratified: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Labeled PMP file (default: <out>/pmps.csv).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub mix: MixOptions,
}

#[derive(Debug, Args)]
pub struct MixOptions {
    /// Observed PMPs, e.g. 0.05,0.91,0.03.
    #[arg(long, conflicts_with = "data")]
    pub observed: Option<String>,
    /// Observed data file; PMPs are computed with the configured models.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use the embedded mixture with this many clusters per component.
    #[arg(long)]
    pub clusters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub stratified: bool,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[command(flatten)]
    pub mix: MixOptions,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV with columns pi_1..pi_J and a true_model column.
    pub file: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FamilyArg {
    Dirichlet,
    LogisticNormal,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Dirichlet => Family::Dirichlet,
            FamilyArg::LogisticNormal => Family::LogisticNormal,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(ConfigError("--threads must be at least 1".into()).into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("cannot start thread pool")?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => {
            let mut config = load_config(&args.common)?;
            config.stratified |= args.stratified;
            config.validate_simulation()?;
            simulate(&config)?;
        }
        Command::Fit(args) => {
            let mut config = load_config(&args.common)?;
            if let Some(f) = args.family {
                config.meta.family = f.into();
            }
            let input = args.input.unwrap_or_else(|| config.out.join("pmps.csv"));
            fit_groups(&config, &input)?;
        }
        Command::Mix(args) => {
            let mut config = load_config(&args.common)?;
            apply_mix_options(&mut config, &args.mix)?;
            mix(&config)?;
        }
        Command::Pipeline(args) => {
            let mut config = load_config(&args.common)?;
            config.stratified |= args.stratified;
            if let Some(f) = args.family {
                config.meta.family = f.into();
            }
            apply_mix_options(&mut config, &args.mix)?;
            config.validate_simulation()?;
            pipeline(&config)?;
        }
        Command::Ingest(args) => {
            let config = load_config(&args.common)?;
            ingest(&config, &args.file)?;
        }
    }
    Ok(())
}

fn load_config(common: &CommonArgs) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn apply_mix_options(config: &mut PipelineConfig, opts: &MixOptions) -> Result<()> {
    if let Some(text) = &opts.observed {
        config.mixture.observed = Some(parse_observed_str(text)?.into_vec());
        config.mixture.data = None;
    }
    if let Some(path) = &opts.data {
        config.mixture.data = Some(path.clone());
        config.mixture.observed = None;
    }
    if let Some(c) = opts.clusters {
        if c == 0 {
            return Err(ConfigError("--clusters must be at least 1".into()).into());
        }
        config.mixture.mode = MixtureMode::Embedded;
        config.mixture.clusters = c;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create_out(config: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&config.out).with_context(|| format!("cannot create {}", config.out.display()))
}

/// Level-2 simulation. Returns the written files.
pub fn simulate(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let set = config.model_set()?;
    let allocation = if config.stratified {
        Allocation::Stratified
    } else {
        Allocation::Prior
    };
    let sample = run_level2(&set, config.k, config.n, config.seed, allocation)?;
    create_out(config)?;
    let csv = config.out.join("pmps.csv");
    sample.save(&csv)?;
    let sizes = group_by_true_model(&sample).sizes();
    eprintln!("simulated K={} N={}; per-model counts {:?}", config.k, config.n, sizes);
    Ok(vec![csv, config.out.join("pmps.json")])
}

/// Fits one meta-model per true-model group. Returns the written files.
pub fn fit_groups(config: &PipelineConfig, input: &Path) -> Result<Vec<PathBuf>> {
    let sample = LabeledPmpSample::load(input).with_context(|| format!("cannot load {}", input.display()))?;
    let groups = group_by_true_model(&sample);
    if let Some(&j) = groups.empty_groups().first() {
        bail!(
            "model {}: no simulations were labeled with it; increase k or use --stratified",
            sample.model_names.get(j).cloned().unwrap_or_else(|| format!("M{}", j + 1))
        );
    }
    create_out(config)?;
    let mut written = Vec::new();
    for j in 0..groups.len() {
        let name = &sample.model_names[j];
        let post = fit(groups.group(j), &config.meta, derive_seed(config.seed, &format!("fit-{j}")))
            .with_context(|| format!("model {name}"))?;
        let rhat = post.diagnostics.max_rhat();
        eprintln!(
            "{name}: {} members, max split-R-hat {rhat:.3}, min ESS {:.0}",
            groups.group(j).len(),
            post.diagnostics.min_ess()
        );
        if rhat > 1.05 {
            eprintln!("warning: {name}: chains have not mixed (R-hat {rhat:.3})");
        }
        let path = config.out.join(format!("meta_{}.json", j + 1));
        write_json(&path, &post)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct MixtureReport {
    observed: Vec<f64>,
    #[serde(flatten)]
    summary: MixtureSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_integral: Option<f64>,
}

/// Builds the predictive mixture from `meta_<j>.json` in the output
/// directory. Returns the written files.
pub fn mix(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let observed = observed_pmps(config)?;
    let parts = observed.parts();
    let fits = (1..=parts)
        .map(|j| {
            let path = config.out.join(format!("meta_{j}.json"));
            let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            let post: MetaPosterior =
                serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
            Ok(Some(post))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = &config.mixture;
    let mixture = build_mixture_with(
        &observed,
        &fits,
        m.mode,
        m.clusters,
        derive_seed(config.seed, "mix"),
        m.moment_draws,
    )?;
    let mut written = Vec::new();
    let mut report = MixtureReport {
        observed: observed.as_slice().to_vec(),
        summary: mixture.summary(),
        grid_resolution: None,
        grid_integral: None,
    };
    if parts == 3 {
        let grid = mixture.density_grid(m.grid_resolution)?;
        let path = config.out.join("grid.csv");
        let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        grid.write_csv(BufWriter::new(file))?;
        report.grid_resolution = Some(m.grid_resolution);
        report.grid_integral = Some(grid.integral()?);
        written.push(path);
    }
    let path = config.out.join("mixture.json");
    write_json(&path, &report)?;
    written.insert(0, path);
    eprintln!("mixture mean {:?}, variance trace {:.4e}", report.summary.mean, report.summary.variance_trace);
    Ok(written)
}

fn observed_pmps(config: &PipelineConfig) -> Result<PmpVector> {
    if let Some(values) = &config.mixture.observed {
        return Ok(parse_observed(values)?);
    }
    let path = config.mixture.data.as_ref().ok_or_else(|| {
        ConfigError("no observed PMPs: pass --observed, --data or set mixture.observed".into())
    })?;
    let set = config.model_set()?;
    let data = read_dataset(config, path)?;
    Ok(compute_pmps(&set, &data)?)
}

/// Reads observed data in the format of the configured model kind.
fn read_dataset(config: &PipelineConfig, path: &Path) -> Result<Dataset> {
    let first = config
        .models
        .first()
        .ok_or_else(|| ConfigError("--data needs the models section of a configuration".into()))?;
    match first {
        ModelSpec::Epidemic { .. } => Ok(Dataset::Counts(read_daily_counts(path)?)),
        ModelSpec::BetaBernoulli { .. } => {
            let (_, rows) = read_numeric_csv(path)?;
            let y = rows
                .iter()
                .map(|r| match r.last() {
                    Some(&v) if v == 0.0 || v == 1.0 => Ok(v as u8),
                    other => Err(anyhow!("{}: expected 0 or 1, got {other:?}", path.display())),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Dataset::Binary(y))
        }
        ModelSpec::NigRegression { .. } => {
            let (header, rows) = read_numeric_csv(path)?;
            if header.last().map(String::as_str) != Some("y") || header.len() < 2 {
                bail!("{}: expected predictor columns followed by y", path.display());
            }
            let p = header.len() - 1;
            let predictors = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
            let response = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[p]));
            Ok(Dataset::Regression { predictors, response })
        }
    }
}

fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if row.len() != header.len() {
            bail!("{}: row {} has {} fields", path.display(), i + 1, row.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no observations", path.display());
    }
    Ok((header, rows))
}

#[derive(Debug, Serialize)]
struct Manifest {
    seed: u64,
    config_sha256: String,
    files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// simulate, fit and (when observed PMPs are configured) mix, followed by
/// a manifest of output checksums.
pub fn pipeline(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let mut written = simulate(config)?;
    written.extend(fit_groups(config, &config.out.join("pmps.csv"))?);
    if config.mixture.observed.is_some() || config.mixture.data.is_some() {
        written.extend(mix(config)?);
    } else {
        eprintln!("no observed PMPs configured; skipping mix");
    }
    let mut files = BTreeMap::new();
    for path in &written {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.insert(name, sha256_hex(&bytes));
    }
    // the output directory does not affect results, so it is left out of the hash
    let hashed = PipelineConfig {
        out: PathBuf::new(),
        ..config.clone()
    };
    let manifest = Manifest {
        seed: config.seed,
        config_sha256: sha256_hex(hashed.to_toml().as_bytes()),
        files,
    };
    let path = config.out.join("manifest.json");
    write_json(&path, &manifest)?;
    written.push(path);
    Ok(written)
}

/// Converts an external labeled PMP file into the level-2 sample format.
pub fn ingest(config: &PipelineConfig, file: &Path) -> Result<Vec<PathBuf>> {
    let source = load_external_pmps(file).with_context(|| format!("cannot ingest {}", file.display()))?;
    if !source.fully_labeled() {
        bail!("{}: every row needs a true_model label", file.display());
    }
    let parts = source.parts();
    let model_names = if config.models.len() == parts {
        config.models.iter().map(|m| m.name().to_string()).collect()
    } else {
        (1..=parts).map(|j| format!("M{j}")).collect()
    };
    let sample = LabeledPmpSample {
        pmps: source.pmps().to_vec(),
        labels: source.labels().iter().map(|l| l.expect("checked above")).collect(),
        n_obs: 0,
        seed: config.seed,
        model_names,
    };
    create_out(config)?;
    let csv = config.out.join("pmps.csv");
    sample.save(&csv)?;
    eprintln!("ingested {} rows with {} models", sample.len(), parts);
    Ok(vec![csv, config.out.join("pmps.json")])
}
