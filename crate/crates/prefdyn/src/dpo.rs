//! Implicit DPO population solver.
//!
//! The DPO optimum has no closed form: θ⋆ solves `Diag(μ)(P − Q(θ))ᵀμ = 0`
//! where `Q(θ)` is the Bradley–Terry matrix of θ. The loss is strictly convex
//! on the sum-zero subspace, so a damped Newton iteration with the Laplacian
//! Hessian converges quadratically.

use crate::model::{
    bt_matrix, center, log_sigmoid, max_abs_diff, sigmoid, softmax, LogitVector, ModelError,
    PreferenceMatrix, Role, SimplexVector,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Entries of P are clamped into `[CLAMP, 1 − CLAMP]` before solving.
pub const CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpoError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("DPO solver did not converge: residual {residual:e} after {} iterations", best.iterations)]
    NonConvergence {
        best: Box<DpoSolution>,
        residual: f64,
    },
    #[error("entry ({i},{j}) is exactly 0 or 1; the DPO optimum is unbounded")]
    DegenerateP { i: usize, j: usize },
    #[error("non-finite logit at index {0}")]
    NonFiniteTheta(usize),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = std::result::Result<T, DpoError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoSolverConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub backtrack: f64,
    pub damping: f64,
    /// Clamp 0/1 entries instead of failing with [`DpoError::DegenerateP`].
    pub clamp_degenerate: bool,
}

impl Default for DpoSolverConfig {
    fn default() -> Self {
        DpoSolverConfig {
            max_iter: 200,
            tol: 1e-10,
            backtrack: 0.5,
            damping: 1e-12,
            clamp_degenerate: true,
        }
    }
}

impl DpoSolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(DpoError::InvalidConfig("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(DpoError::InvalidConfig("tol must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(DpoError::InvalidConfig("backtrack must lie in (0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoSolution {
    pub theta: LogitVector,
    /// `bt_matrix(theta)`.
    pub q: PreferenceMatrix,
    /// `‖Diag(μ)(P − Q)ᵀμ‖_∞` against the (clamped) P actually solved.
    pub foc_residual: f64,
    pub iterations: usize,
}

fn check_theta(theta: &[f64]) -> Result<()> {
    match theta.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(DpoError::NonFiniteTheta(i)),
        None => Ok(()),
    }
}

fn check_len(p: &PreferenceMatrix, n: usize) -> Result<()> {
    if n != p.k() {
        return Err(ModelError::LengthMismatch {
            expected: p.k(),
            got: n,
        }
        .into());
    }
    Ok(())
}

fn loss_grad_raw(theta: &[f64], p: &PreferenceMatrix, mu: &[f64]) -> (f64, Vec<f64>) {
    let k = p.k();
    let mut loss = 0.0;
    let mut grad = vec![0.0; k];
    for i in 0..k {
        let mut g = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = theta[i] - theta[j];
            loss -= mu[i] * mu[j] * p.get(i, j) * log_sigmoid(d);
            g += mu[j] * (sigmoid(d) - p.get(i, j));
        }
        grad[i] = mu[i] * g;
    }
    // The skew part makes the raw gradient sum to zero; centering removes rounding.
    (loss, center(&grad))
}

/// DPO population loss `−Σ μ_iμ_j P_ij log σ(θ_i − θ_j)` and its sum-zero gradient
/// `Diag(μ)(Q(θ) − P)μ`.
pub fn dpo_loss_grad(
    theta: &LogitVector,
    p: &PreferenceMatrix,
    mu: &SimplexVector,
) -> Result<(f64, Vec<f64>)> {
    check_len(p, theta.len())?;
    check_len(p, mu.len())?;
    check_theta(theta.as_slice())?;
    Ok(loss_grad_raw(theta.as_slice(), p, mu.as_slice()))
}

/// Laplacian Hessian `Σ_{i<j} μ_iμ_j σ'(θ_i−θ_j)(e_i−e_j)(e_i−e_j)ᵀ`.
pub fn laplacian_hessian(theta: &[f64], mu: &[f64]) -> DMatrix<f64> {
    let k = theta.len();
    let mut h = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let s = sigmoid(theta[i] - theta[j]);
            let w = mu[i] * mu[j] * s * (1.0 - s);
            h[(i, i)] += w;
            h[(j, j)] += w;
            h[(i, j)] -= w;
            h[(j, i)] -= w;
        }
    }
    h
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton_direction(theta: &[f64], mu: &[f64], grad: &[f64], damping: f64) -> Option<Vec<f64>> {
    let k = theta.len();
    let mut h = laplacian_hessian(theta, mu);
    // Adding c·11ᵀ lifts the null direction without touching the sum-zero block.
    let scale = (h.trace() / k as f64).max(damping);
    for i in 0..k {
        for j in 0..k {
            h[(i, j)] += scale / k as f64;
        }
        h[(i, i)] += damping;
    }
    let chol = h.cholesky()?;
    let d = chol.solve(&DVector::from_iterator(k, grad.iter().map(|g| -g)));
    let d: Vec<f64> = d.iter().copied().collect();
    if d.iter().all(|x| x.is_finite()) {
        Some(center(&d))
    } else {
        None
    }
}

fn prepare(p: &PreferenceMatrix, cfg: &DpoSolverConfig) -> Result<PreferenceMatrix> {
    let k = p.k();
    let mut degenerate = None;
    for i in 0..k {
        for j in (i + 1)..k {
            let v = p.get(i, j);
            if !(CLAMP..=1.0 - CLAMP).contains(&v) {
                degenerate.get_or_insert((i, j));
            }
        }
    }
    match degenerate {
        None => Ok(p.clone()),
        Some((i, j)) if !cfg.clamp_degenerate && (p.get(i, j) == 0.0 || p.get(i, j) == 1.0) => {
            Err(DpoError::DegenerateP { i, j })
        }
        Some((i, j)) => {
            log::warn!(
                "clamping preference entries into [{CLAMP}, {}] (first at ({i},{j}))",
                1.0 - CLAMP
            );
            Ok(p.clamped(CLAMP))
        }
    }
}

/// Solves for θ⋆(P, μ) in the sum-zero gauge.
pub fn dpo_solve(
    p: &PreferenceMatrix,
    mu: &SimplexVector,
    cfg: &DpoSolverConfig,
) -> Result<DpoSolution> {
    cfg.validate()?;
    check_len(p, mu.len())?;
    mu.require_full_support()?;
    let p = prepare(p, cfg)?;
    let mu = mu.as_slice();
    let k = p.k();

    let mut theta = vec![0.0; k];
    let (mut loss, mut grad) = loss_grad_raw(&theta, &p, mu);
    let mut iterations = 0;
    while inf_norm(&grad) > cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let gnorm = inf_norm(&grad);
        let newton = newton_direction(&theta, mu, &grad, cfg.damping);
        let mut accepted = false;
        for dir in newton
            .into_iter()
            .chain(std::iter::once(grad.iter().map(|g| -g).collect()))
        {
            let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
            if !(slope < 0.0) {
                continue;
            }
            let mut t = 1.0;
            while t > 1e-30 {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                let (cl, cg) = loss_grad_raw(&cand, &p, mu);
                // Near the optimum loss differences drop below rounding; a smaller
                // gradient is then the reliable acceptance signal.
                if cl <= loss + 1e-4 * t * slope
                    || (cl <= loss + 1e-14 * loss.abs() && inf_norm(&cg) < gnorm)
                {
                    theta = cand;
                    loss = cl;
                    grad = cg;
                    accepted = true;
                    break;
                }
                t *= cfg.backtrack;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break;
        }
    }

    theta = center(&theta);
    check_theta(&theta)?;
    let foc_residual = inf_norm(&loss_grad_raw(&theta, &p, mu).1);
    let sol = DpoSolution {
        q: bt_matrix(&theta)?,
        theta: LogitVector::from_raw(&theta)?,
        foc_residual,
        iterations,
    };
    if foc_residual <= cfg.tol {
        Ok(sol)
    } else {
        Err(DpoError::NonConvergence {
            residual: foc_residual,
            best: Box::new(sol),
        })
    }
}

/// `softmax(log π_ref + β·θ)`.
pub fn dpo_policy(theta: &LogitVector, pi_ref: &SimplexVector, beta: f64) -> Result<SimplexVector> {
    if theta.len() != pi_ref.len() {
        return Err(ModelError::LengthMismatch {
            expected: pi_ref.len(),
            got: theta.len(),
        }
        .into());
    }
    let z: Vec<f64> = pi_ref
        .ln()
        .iter()
        .zip(theta.as_slice())
        .map(|(l, t)| l + beta * t)
        .collect();
    Ok(softmax(&z)?)
}

/// Largest pairwise ∞-deviation of θ⋆ across samplings, and whether it stays under `1e-6`.
pub fn bt_invariance_probe(
    p: &PreferenceMatrix,
    samplings: &[SimplexVector],
    cfg: &DpoSolverConfig,
) -> Result<(f64, bool)> {
    if samplings.len() < 2 {
        return Err(DpoError::InvalidConfig(
            "invariance probe needs at least two samplings",
        ));
    }
    let thetas = samplings
        .iter()
        .map(|mu| dpo_solve(p, mu, cfg).map(|s| s.theta))
        .collect::<Result<Vec<_>>>()?;
    let mut dev: f64 = 0.0;
    for a in 0..thetas.len() {
        for b in (a + 1)..thetas.len() {
            dev = dev.max(max_abs_diff(thetas[a].as_slice(), thetas[b].as_slice()));
        }
    }
    Ok((dev, dev <= 1e-6))
}

/// Weighted gap functionals `(g1, g2)` of θ = β⁻¹ log(π/π_ref).
///
/// Indices are taken as given; callers order responses by descending θ first.
pub fn gap_functionals(
    pi: &SimplexVector,
    mu: &SimplexVector,
    p: &PreferenceMatrix,
    pi_ref: &SimplexVector,
    beta: f64,
) -> Result<(f64, f64)> {
    for v in [pi, mu, pi_ref] {
        check_len(p, v.len())?;
        v.require_full_support()?;
    }
    let theta: Vec<f64> = pi
        .ln()
        .iter()
        .zip(pi_ref.ln())
        .map(|(a, b)| (a - b) / beta)
        .collect();
    Ok(gaps_of_theta(&theta, mu.as_slice(), p))
}

fn gaps_of_theta(theta: &[f64], mu: &[f64], p: &PreferenceMatrix) -> (f64, f64) {
    let k = theta.len();
    let mut g1 = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            g1 += p.get(j, i) / (mu[i] * mu[j]) * (theta[i] - theta[j]);
        }
    }
    let last = k - 1;
    let g2 = (0..last)
        .map(|i| p.get(last, i) / mu[i] * (theta[i] - theta[last]))
        .sum();
    (g1, g2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbDirection {
    /// `μ′ ∝ μ + δ/μ`, toward uniform.
    InverseMu,
    /// `μ′ ∝ μ + δ·e_K`, toward the lowest-logit response.
    LastCoordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPerturbationReport {
    pub before: f64,
    pub after: f64,
    pub decreased: bool,
    /// `order[a]` is the original index of the response placed at position `a` (θ descending).
    pub order: Vec<usize>,
}

/// Re-solves DPO after nudging μ and compares the matching gap functional,
/// both evaluated with the original μ weights.
///
/// Responses are first sorted by descending θ⋆(P, μ), so "last coordinate"
/// means the response with the lowest logit.
pub fn dpo_gap_perturbation(
    p: &PreferenceMatrix,
    mu: &SimplexVector,
    direction: PerturbDirection,
    delta: f64,
    cfg: &DpoSolverConfig,
) -> Result<GapPerturbationReport> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(ModelError::ParameterOutOfRange {
            name: "delta",
            value: delta,
        }
        .into());
    }
    let base = dpo_solve(p, mu, cfg)?;
    let mut order: Vec<usize> = (0..p.k()).collect();
    order.sort_by(|&a, &b| base.theta[b].total_cmp(&base.theta[a]).then(a.cmp(&b)));
    let ps = p.permuted(&order);
    let mus = mu.permuted(&order);
    let k = p.k();
    let shifted: Vec<f64> = match direction {
        PerturbDirection::InverseMu => mus.as_slice().iter().map(|m| m + delta / m).collect(),
        PerturbDirection::LastCoordinate => (0..k)
            .map(|i| mus[i] + if i == k - 1 { delta } else { 0.0 })
            .collect(),
    };
    let mu2 = SimplexVector::normalized(shifted, Role::Sampling)?;
    let theta_before: Vec<f64> = order.iter().map(|&i| base.theta[i]).collect();
    let theta_after = dpo_solve(&ps, &mu2, cfg)?.theta;
    let pick = |(g1, g2): (f64, f64)| match direction {
        PerturbDirection::InverseMu => g1,
        PerturbDirection::LastCoordinate => g2,
    };
    let before = pick(gaps_of_theta(&theta_before, mus.as_slice(), &ps));
    let after = pick(gaps_of_theta(theta_after.as_slice(), mus.as_slice(), &ps));
    Ok(GapPerturbationReport {
        before,
        after,
        decreased: after < before,
        order,
    })
}

/// Inputs of the DPO contraction margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoStabilityInputs {
    /// Bound on `max θ⋆ − min θ⋆` over reachable samplings.
    pub b: f64,
    /// `σ'(B) = σ(B)(1 − σ(B))`.
    pub s_b: f64,
    /// `(1 − λ)·min π_0`.
    pub mu_floor: f64,
}

impl DpoStabilityInputs {
    pub fn new(b: f64, lambda: f64, pi_0: &SimplexVector) -> Self {
        let s = sigmoid(b);
        let min0 = pi_0
            .as_slice()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        DpoStabilityInputs {
            b,
            s_b: s * (1.0 - s),
            mu_floor: (1.0 - lambda) * min0,
        }
    }

    /// Estimates B as the largest θ⋆ spread over `samples` random policies
    /// mixed into the sampling distribution `λπ + (1−λ)π_0`.
    pub fn estimate(
        p: &PreferenceMatrix,
        lambda: f64,
        pi_0: &SimplexVector,
        samples: usize,
        seed: u64,
        cfg: &DpoSolverConfig,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = p.k();
        let mut b: f64 = 0.0;
        for _ in 0..samples {
            let w: Vec<f64> = (0..k)
                .map(|_| -rng.random::<f64>().max(1e-300).ln())
                .collect();
            let pi = SimplexVector::normalized(w, Role::Policy)?;
            let mu = crate::model::affine_mix(&pi, pi_0, lambda)?;
            b = b.max(dpo_solve(p, &mu, cfg)?.theta.spread());
        }
        Ok(Self::new(b, lambda, pi_0))
    }
}
