//! Closed-form IPO population solver.
//!
//! The optimum of the population IPO objective is `π⋆ ∝ π_ref ⊙ exp(β·P·μ)`,
//! so the implied logits are `P·μ` up to the gauge.

use crate::model::{
    center, max_abs_diff, softmax, LogitVector, ModelError, PreferenceMatrix, Result, SimplexVector,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpoSolution {
    pub policy: SimplexVector,
    /// `β⁻¹(log π⋆ − log π_ref)` in the sum-zero gauge; equals centered `P·μ`.
    pub theta: LogitVector,
    pub objective: f64,
    pub foc_residual: f64,
}

fn check_inputs(p: &PreferenceMatrix, vs: &[&SimplexVector]) -> Result<()> {
    for v in vs {
        if v.len() != p.k() {
            return Err(ModelError::LengthMismatch {
                expected: p.k(),
                got: v.len(),
            });
        }
        v.require_full_support()?;
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(ModelError::ParameterOutOfRange {
            name: "beta",
            value: beta,
        })
    }
}

/// `softmax(log π_ref + β·P·μ)`, the IPO optimum.
pub fn ipo_solve(
    p: &PreferenceMatrix,
    mu: &SimplexVector,
    pi_ref: &SimplexVector,
    beta: f64,
) -> Result<IpoSolution> {
    check_inputs(p, &[mu, pi_ref])?;
    check_beta(beta)?;
    let pmu = p.mul_vec(mu.as_slice());
    let z: Vec<f64> = pi_ref
        .ln()
        .iter()
        .zip(&pmu)
        .map(|(l, s)| l + beta * s)
        .collect();
    let policy = softmax(&z)?;
    let theta = LogitVector::from_raw(&pmu)?;
    let objective = ipo_objective(&policy, p, mu, pi_ref, beta)?;
    let foc_residual = ipo_foc_residual(&policy, p, mu, pi_ref, beta)?;
    Ok(IpoSolution {
        policy,
        theta,
        objective,
        foc_residual,
    })
}

/// `Σ_{i,j} μ_iμ_j P_ij (h_i − h_j − β/2)²` with `h = log(π/π_ref)`.
pub fn ipo_objective(
    pi: &SimplexVector,
    p: &PreferenceMatrix,
    mu: &SimplexVector,
    pi_ref: &SimplexVector,
    beta: f64,
) -> Result<f64> {
    check_inputs(p, &[pi, mu, pi_ref])?;
    let h: Vec<f64> = pi
        .as_slice()
        .iter()
        .zip(pi_ref.as_slice())
        .map(|(a, b)| (a / b).ln())
        .collect();
    let k = p.k();
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let d = h[i] - h[j] - beta / 2.0;
            total += mu[i] * mu[j] * p.get(i, j) * d * d;
        }
    }
    Ok(total)
}

/// `‖(Diag μ − μμᵀ)θ − Diag(μ)(Pμ − ½·1)‖_∞` with `θ = β⁻¹ log(π/π_ref)` centered.
pub fn ipo_foc_residual(
    pi: &SimplexVector,
    p: &PreferenceMatrix,
    mu: &SimplexVector,
    pi_ref: &SimplexVector,
    beta: f64,
) -> Result<f64> {
    check_inputs(p, &[pi, mu, pi_ref])?;
    check_beta(beta)?;
    let raw: Vec<f64> = pi
        .as_slice()
        .iter()
        .zip(pi_ref.as_slice())
        .map(|(a, b)| (a.ln() - b.ln()) / beta)
        .collect();
    let theta = center(&raw);
    let mu = mu.as_slice();
    let mu_theta: f64 = mu.iter().zip(&theta).map(|(a, b)| a * b).sum();
    let pmu = p.mul_vec(mu);
    let lhs: Vec<f64> = (0..p.k())
        .map(|i| mu[i] * theta[i] - mu[i] * mu_theta)
        .collect();
    let rhs: Vec<f64> = (0..p.k()).map(|i| mu[i] * (pmu[i] - 0.5)).collect();
    Ok(max_abs_diff(&lhs, &rhs))
}
