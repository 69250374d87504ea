//! Grid sweeps of MRS runs over a matrix collection.

use crate::analysis::{cycle_strength, entropy};
use crate::dynamics::{run_dynamics, StepContext};
use crate::ingest::{mix_seed, noisy_realization, NoiseConfig};
use crate::model::{DynamicsConfig, ModelError, PreferenceMatrix, SolverKind};
use serde::{Deserialize, Serialize};

/// How independent jobs are scheduled. Results are always returned in input order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// rayon work pool; runs sequentially when built without the `parallel` feature.
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
            }
            _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Entropy of the last iterate.
    Entropy,
    CycleStrength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub beta_lambdas: Vec<f64>,
    /// β is set to `βλ / lambda` in every cell.
    pub lambda: f64,
    pub horizon: usize,
    pub tolerance: f64,
    pub metric: Metric,
    pub solver: SolverKind,
    pub burn_in: f64,
    pub noise: Option<NoiseConfig>,
    /// Noisy realizations per matrix; ignored without `noise`.
    pub realizations: usize,
}

impl SweepSpec {
    pub fn new(alphas: Vec<f64>, beta_lambdas: Vec<f64>, metric: Metric) -> Self {
        SweepSpec {
            alphas,
            beta_lambdas,
            lambda: 0.5,
            horizon: 3000,
            tolerance: 1e-12,
            metric,
            solver: SolverKind::Ipo,
            burn_in: 1.0 / 3.0,
            noise: None,
            realizations: 50,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.alphas.is_empty() || self.beta_lambdas.is_empty() {
            return Err(ModelError::ParameterOutOfRange {
                name: "grid size",
                value: 0.0,
            });
        }
        if self.horizon == 0 {
            return Err(ModelError::ParameterOutOfRange {
                name: "horizon",
                value: 0.0,
            });
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(ModelError::ParameterOutOfRange {
                name: "lambda",
                value: self.lambda,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta_lambda: f64,
    pub mean: f64,
    /// Population standard deviation over successful runs.
    pub std: f64,
    /// Instances attempted in this cell.
    pub n: usize,
    /// Runs that hit the horizon without converging, plus runs that failed.
    pub nonconverged: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

/// Matrices actually simulated: the inputs, or `realizations` noisy copies of each.
pub fn expand_instances(
    spec: &SweepSpec,
    matrices: &[PreferenceMatrix],
) -> Result<Vec<PreferenceMatrix>, ModelError> {
    let Some(noise) = spec.noise else {
        return Ok(matrices.to_vec());
    };
    let mut out = Vec::with_capacity(matrices.len() * spec.realizations);
    for (m, p) in matrices.iter().enumerate() {
        for r in 0..spec.realizations {
            let seed = mix_seed(mix_seed(noise.seed, m as u64), r as u64);
            out.push(noisy_realization(p, NoiseConfig { n: noise.n, seed })?);
        }
    }
    Ok(out)
}

enum Outcome {
    Done { value: f64, converged: bool },
    Failed,
}

fn run_one(spec: &SweepSpec, alpha: f64, beta_lambda: f64, p: &PreferenceMatrix) -> Outcome {
    let cfg = DynamicsConfig {
        horizon: spec.horizon,
        tolerance: spec.tolerance,
        ..DynamicsConfig::uniform(
            p.k(),
            alpha,
            beta_lambda / spec.lambda,
            spec.lambda,
            spec.solver,
        )
    };
    let traj = match StepContext::new(cfg, p.clone()).and_then(|ctx| run_dynamics(&ctx)) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("sweep run (alpha={alpha}, beta_lambda={beta_lambda}) failed: {e}");
            return Outcome::Failed;
        }
    };
    let value = match spec.metric {
        Metric::Entropy => entropy(traj.last()),
        Metric::CycleStrength => cycle_strength(&traj, spec.burn_in),
    };
    Outcome::Done {
        value,
        converged: traj.converged_at.is_some() || traj.underflow_at.is_some(),
    }
}

/// Runs every (cell, instance) pair and aggregates per cell in row-major
/// `(alpha, beta_lambda)` order.
pub fn run_sweep(
    spec: &SweepSpec,
    matrices: &[PreferenceMatrix],
    exec: Execution,
) -> Result<SweepResult, ModelError> {
    spec.validate()?;
    let instances = expand_instances(spec, matrices)?;
    let cells: Vec<(f64, f64)> = spec
        .alphas
        .iter()
        .flat_map(|&a| spec.beta_lambdas.iter().map(move |&b| (a, b)))
        .collect();
    let n = instances.len();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..n).map(move |i| (c, i)))
        .collect();
    let outcomes = exec.map(&jobs, |_, &(c, i)| {
        run_one(spec, cells[c].0, cells[c].1, &instances[i])
    });
    let result = cells
        .iter()
        .enumerate()
        .map(|(c, &(alpha, beta_lambda))| {
            let slice = &outcomes[c * n..(c + 1) * n];
            let values: Vec<f64> = slice
                .iter()
                .filter_map(|o| match o {
                    Outcome::Done { value, .. } => Some(*value),
                    Outcome::Failed => None,
                })
                .collect();
            let failed = n - values.len();
            let nonconverged = failed
                + slice
                    .iter()
                    .filter(|o| {
                        matches!(
                            o,
                            Outcome::Done {
                                converged: false,
                                ..
                            }
                        )
                    })
                    .count();
            let (mean, std) = mean_std(&values);
            SweepCell {
                alpha,
                beta_lambda,
                mean,
                std,
                n,
                nonconverged,
                failed,
            }
        })
        .collect();
    Ok(SweepResult { cells: result })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    (mean, var.sqrt())
}
