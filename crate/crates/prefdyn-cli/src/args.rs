//! Flag definitions and `--config` merging.
//!
//! Every subcommand flag is optional at parse time so a JSON config file can
//! supply it; flags given on the command line win. Config keys are the long
//! flag names (`"beta-lambdas": [0.4, 2.0]`).

use crate::Failure;
use clap::{Args, Parser, Subcommand, ValueEnum};
use prefdyn::analysis::Family;
use prefdyn::model::SolverKind;
use prefdyn::sweep::Metric;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "prefdyn",
    version,
    about = "Preference-optimization solvers and alignment dynamics"
)]
pub struct Cli {
    /// JSON file of default flag values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more logging.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build preference matrices from a JSONL corpus of scored responses.
    Ingest(IngestArgs),
    /// Report Condorcet winner, Smith set and transitivity class.
    Classify(ClassifyArgs),
    /// Solve one IPO or DPO problem.
    Solve(SolveArgs),
    /// Run MRS dynamics and write the trajectory.
    Simulate(SimulateArgs),
    /// Aggregate a metric over an (alpha, beta*lambda) grid.
    Sweep(SweepArgs),
    /// Contraction margins, instability predicates and Jacobian radius.
    Stability(StabilityArgs),
    /// Condorcet-top and Smith-top sampling designs.
    Axioms(AxiomsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverArg {
    Ipo,
    Dpo,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Ipo => SolverKind::Ipo,
            SolverArg::Dpo => SolverKind::Dpo,
        }
    }
}

impl From<SolverArg> for Family {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Ipo => Family::Ipo,
            SolverArg::Dpo => Family::Dpo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Entropy,
    CycleStrength,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Entropy => Metric::Entropy,
            MetricArg::CycleStrength => Metric::CycleStrength,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassFilter {
    /// ST-or-stronger matrices.
    St,
    Cyclic,
    All,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct IngestArgs {
    /// JSONL corpus.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Responses per matrix [default: 4].
    #[arg(long)]
    pub k: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Matrix collection to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ClassifyArgs {
    /// Matrix file or matrix collection.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SolveArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Entry of a collection [default: 0].
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Sampling distribution, comma separated [default: uniform].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu: Option<Vec<f64>>,
    /// Reference policy [default: uniform].
    #[arg(long, value_delimiter = ',')]
    pub pi_ref: Option<Vec<f64>>,
    /// [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Newton iteration cap for the DPO solver [default: 200].
    #[arg(long)]
    pub dpo_max_iter: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Overrides --beta-lambda.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Sets beta = value / lambda.
    #[arg(long)]
    pub beta_lambda: Option<f64>,
    /// [default: 0.5]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Horizon T [default: 3000].
    #[arg(long)]
    pub iters: Option<usize>,
    /// [default: 1e-12]
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Newton iteration cap for the DPO solver [default: 200].
    #[arg(long)]
    pub dpo_max_iter: Option<usize>,
    /// Replace P by one noisy realization with this many comparisons per pair.
    #[arg(long)]
    pub noise_n: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SweepArgs {
    /// Matrix collection.
    #[arg(long)]
    pub matrices: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub beta_lambdas: Option<Vec<f64>>,
    /// [default: 0.5]
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Matrices to keep [default: st for entropy, cyclic for cycle-strength].
    #[arg(long, value_enum)]
    pub class: Option<ClassFilter>,
    /// Fraction of each run discarded before measuring cycle strength [default: 1/3].
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Comparisons per pair for noisy realizations; off when absent.
    #[arg(long)]
    pub noise_n: Option<u32>,
    /// Noisy realizations per matrix [default: 50].
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run on one thread.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sequential: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct StabilityArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub beta_lambda: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub family: Option<SolverArg>,
    /// Fixed point at which to evaluate the Jacobian; searched for when absent.
    #[arg(long, value_delimiter = ',')]
    pub fixed_point: Option<Vec<f64>>,
    /// Bound B on the DPO logit spread; estimated by sampling when absent.
    #[arg(long)]
    pub dpo_bound: Option<f64>,
    /// Random policies used to estimate B [default: 200].
    #[arg(long)]
    pub dpo_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AxiomsArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<usize>,
    /// Grid step of the order-preservation search [default: 0.02].
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>) -> Result<Value, Failure> {
    let Some(path) = path else {
        return Ok(Value::Null);
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::data(anyhow::anyhow!(
            "cannot read config {}: {e}",
            path.display()
        ))
    })?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Failure::Usage(format!(
            "config {} must be a JSON object",
            path.display()
        )));
    }
    Ok(v)
}

/// Overlays the flags that were given on top of the config object.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: T, config: &Value) -> Result<T, Failure> {
    let Value::Object(cfg) = config else {
        return Ok(flags);
    };
    let mut merged = cfg.clone();
    if let Ok(Value::Object(given)) = serde_json::to_value(&flags) {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Failure::Usage(format!("config: {e}")))
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Usage(format!("missing --{flag}")))
}
