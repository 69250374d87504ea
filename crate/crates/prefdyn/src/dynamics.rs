//! Mixed reference/sampling (MRS) dynamics.
//!
//! Each step re-anchors the reference to a geometric mix of the current policy
//! and the base reference, samples from an affine mix of the current policy and
//! an off-policy anchor, and returns the IPO (or DPO) optimum for that pair.

use crate::dpo::{dpo_solve, DpoError, DpoSolverConfig};
use crate::model::{
    affine_mix, geometric_mix, softmax, DynamicsConfig, ModelError, PreferenceMatrix,
    SimplexVector, SolverKind, Trajectory,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coordinates below this value end a run.
pub const UNDERFLOW: f64 = 1e-300;
/// Consecutive sub-tolerance steps required to declare convergence.
pub const CONVERGENCE_STREAK: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("DPO solve failed at step {step}: {source}")]
    Dpo { step: usize, source: DpoError },
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepContext {
    pub config: DynamicsConfig,
    pub preference: PreferenceMatrix,
    pub dpo: DpoSolverConfig,
}

impl StepContext {
    pub fn new(config: DynamicsConfig, preference: PreferenceMatrix) -> Result<Self> {
        Self::with_dpo(config, preference, DpoSolverConfig::default())
    }

    pub fn with_dpo(
        config: DynamicsConfig,
        preference: PreferenceMatrix,
        dpo: DpoSolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        if config.k() != preference.k() {
            return Err(ModelError::LengthMismatch {
                expected: preference.k(),
                got: config.k(),
            }
            .into());
        }
        Ok(StepContext {
            config,
            preference,
            dpo,
        })
    }

    /// Same run with responses relabeled by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let c = &self.config;
        StepContext {
            config: DynamicsConfig {
                pi_ref: c.pi_ref.permuted(perm),
                pi_0: c.pi_0.permuted(perm),
                pi_1: c.pi_1.permuted(perm),
                ..c.clone()
            },
            preference: self.preference.permuted(perm),
            dpo: self.dpo,
        }
    }
}

fn mixed_inputs(pi_t: &SimplexVector, ctx: &StepContext) -> Result<(SimplexVector, SimplexVector)> {
    let c = &ctx.config;
    let reference = geometric_mix(pi_t, &c.pi_ref, c.alpha)?;
    let sampling = affine_mix(pi_t, &c.pi_0, c.lambda)?;
    Ok((reference, sampling))
}

fn finish(reference: &SimplexVector, beta: f64, drift: &[f64]) -> Result<SimplexVector> {
    let z: Vec<f64> = reference
        .ln()
        .iter()
        .zip(drift)
        .map(|(l, d)| l + beta * d)
        .collect();
    Ok(softmax(&z)?)
}

/// `softmax(log π_ref^(t) + β·P·μ_t)`.
pub fn mrs_ipo_step(pi_t: &SimplexVector, ctx: &StepContext) -> Result<SimplexVector> {
    let (reference, sampling) = mixed_inputs(pi_t, ctx)?;
    let drift = ctx.preference.mul_vec(sampling.as_slice());
    finish(&reference, ctx.config.beta, &drift)
}

/// `softmax(log π_ref^(t) + β·θ⋆(P, μ_t))`.
pub fn mrs_dpo_step(pi_t: &SimplexVector, ctx: &StepContext) -> Result<SimplexVector> {
    dpo_step_at(pi_t, ctx, 0)
}

fn dpo_step_at(pi_t: &SimplexVector, ctx: &StepContext, step: usize) -> Result<SimplexVector> {
    let (reference, sampling) = mixed_inputs(pi_t, ctx)?;
    let sol = dpo_solve(&ctx.preference, &sampling, &ctx.dpo)
        .map_err(|source| DynamicsError::Dpo { step, source })?;
    finish(&reference, ctx.config.beta, sol.theta.as_slice())
}

/// One step of whichever solver the context selects.
pub fn step(pi_t: &SimplexVector, ctx: &StepContext) -> Result<SimplexVector> {
    match ctx.config.solver {
        SolverKind::Ipo => mrs_ipo_step(pi_t, ctx),
        SolverKind::Dpo => mrs_dpo_step(pi_t, ctx),
    }
}

/// Iterates from `π_1` for `T` steps, stopping early after
/// [`CONVERGENCE_STREAK`] consecutive sub-tolerance moves or on underflow.
pub fn run_dynamics(ctx: &StepContext) -> Result<Trajectory> {
    let c = &ctx.config;
    let mut policies = Vec::with_capacity(c.horizon.min(1 << 16));
    policies.push(c.pi_1.clone());
    let mut streak = 0;
    let mut converged_at = None;
    let mut underflow_at = None;
    for t in 1..c.horizon {
        let prev = policies.last().expect("nonempty");
        let next = match c.solver {
            SolverKind::Ipo => mrs_ipo_step(prev, ctx)?,
            SolverKind::Dpo => dpo_step_at(prev, ctx, t)?,
        };
        if next.as_slice().iter().any(|&x| x < UNDERFLOW) {
            log::warn!("policy coordinate underflowed at step {t}; run truncated");
            underflow_at = Some(t);
            break;
        }
        let moved = next.max_abs_diff(prev);
        policies.push(next);
        if moved < c.tolerance {
            streak += 1;
            if streak == CONVERGENCE_STREAK {
                converged_at = Some(t + 1 - CONVERGENCE_STREAK);
                break;
            }
        } else {
            streak = 0;
        }
    }
    Ok(Trajectory {
        policies,
        converged_at,
        underflow_at,
        config: c.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRatioSeries {
    /// `r[t][i] = log(π_{t,i} / π_{t,i+1})`.
    pub ratios: Vec<Vec<f64>>,
    /// Per-step max deviation from the exact IPO log-ratio recursion.
    pub recursion_residual: Option<Vec<f64>>,
}

fn adjacent_log_ratios(pi: &SimplexVector) -> Vec<f64> {
    pi.as_slice()
        .windows(2)
        .map(|w| w[0].ln() - w[1].ln())
        .collect()
}

/// Adjacent log-ratios of every iterate; with `p`, also the residual of
/// `r_{t+1} = α r_t + (1−α) r_ref + β((Pμ_t)_i − (Pμ_t)_{i+1})`.
pub fn log_ratio_series(traj: &Trajectory, p: Option<&PreferenceMatrix>) -> Result<LogRatioSeries> {
    let ratios: Vec<Vec<f64>> = traj.policies.iter().map(adjacent_log_ratios).collect();
    let c = &traj.config;
    let recursion_residual = match p {
        None => None,
        Some(p) => {
            let r_ref = adjacent_log_ratios(&c.pi_ref);
            let mut res = Vec::with_capacity(ratios.len().saturating_sub(1));
            for t in 0..ratios.len().saturating_sub(1) {
                let mu = affine_mix(&traj.policies[t], &c.pi_0, c.lambda)?;
                let pm = p.mul_vec(mu.as_slice());
                let worst = (0..r_ref.len())
                    .map(|i| {
                        let pred = c.alpha * ratios[t][i]
                            + (1.0 - c.alpha) * r_ref[i]
                            + c.beta * (pm[i] - pm[i + 1]);
                        (ratios[t + 1][i] - pred).abs()
                    })
                    .fold(0.0, f64::max);
                res.push(worst);
            }
            Some(res)
        }
    };
    Ok(LogRatioSeries {
        ratios,
        recursion_residual,
    })
}
