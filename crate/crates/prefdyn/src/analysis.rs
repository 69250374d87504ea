//! Stability margins, instability predicates, Jacobian spectra, collapse
//! bounds and scalar trajectory metrics.

use crate::dpo::DpoStabilityInputs;
use crate::model::{ModelError, PreferenceMatrix, SimplexVector, Trajectory};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("point is not fixed by the step map: residual {0:e}")]
    NotAFixedPoint(f64),
    #[error("step map failed while differentiating: {0}")]
    StepFailed(String),
    #[error("matrix is not transitive along the given response order")]
    NotTransitive,
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

fn tilde(p: &PreferenceMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(p.k(), p.k(), |i, j| p.get(i, j) - 0.5)
}

/// `‖P − ½11ᵀ‖₂` by power iteration on `ÃᵀÃ`.
pub fn spectral_norm_tilde(p: &PreferenceMatrix) -> f64 {
    let a = tilde(p);
    let ata = a.transpose() * &a;
    let k = p.k();
    // A deterministic start with distinct entries avoids orthogonality to the top space.
    let mut v = nalgebra::DVector::from_fn(k, |i, _| {
        1.0 + (i as f64 + 1.0).sqrt().fract() + i as f64 * 0.1
    });
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..100_000 {
        let w = &ata * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / n;
        if (next - est).abs() <= 1e-10 * next.abs() {
            est = next;
            break;
        }
        est = next;
    }
    est.max(0.0).sqrt()
}

/// Largest number of nonzero entries in a row of `Ã`.
pub fn tilde_row_support(p: &PreferenceMatrix) -> usize {
    (0..p.k())
        .map(|i| p.row(i).iter().filter(|&&x| x != 0.5).count())
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpoStability {
    pub tilde_norm: f64,
    /// `α + (βλ/2)‖Ã‖₂`.
    pub margin: f64,
    pub row_support: usize,
    /// `α + βλd/4`.
    pub sparse_margin: f64,
    pub stable: bool,
}

pub fn ipo_stability(p: &PreferenceMatrix, alpha: f64, beta: f64, lambda: f64) -> IpoStability {
    let tilde_norm = spectral_norm_tilde(p);
    let margin = alpha + beta * lambda / 2.0 * tilde_norm;
    let d = tilde_row_support(p);
    let sparse_margin = alpha + beta * lambda * d as f64 / 4.0;
    IpoStability {
        tilde_norm,
        margin,
        row_support: d,
        sparse_margin,
        stable: margin < 1.0 || sparse_margin < 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ipo,
    Dpo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpsInstability {
    pub value: f64,
    pub unstable: bool,
}

/// Linear-instability predicate of the uniform fixed point under RPS(a).
pub fn rps_instability(
    a: f64,
    alpha: f64,
    beta: f64,
    lambda: f64,
    family: Family,
) -> RpsInstability {
    let bl2 = (beta * lambda).powi(2);
    match family {
        Family::Ipo => {
            let value = alpha * alpha + a * a * bl2 / 3.0;
            RpsInstability {
                value,
                unstable: value > 1.0,
            }
        }
        Family::Dpo => {
            let value = alpha * alpha + 16.0 * a * a * bl2 / 3.0;
            RpsInstability {
                value,
                unstable: value >= 1.0,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoStability {
    /// `α + βλ/(μ̲²·s_B)`.
    pub margin: f64,
    pub stable: bool,
}

pub fn dpo_stability(
    alpha: f64,
    beta: f64,
    lambda: f64,
    inputs: &DpoStabilityInputs,
) -> Result<DpoStability> {
    if !(lambda < 1.0) {
        return Err(AnalysisError::Precondition("DPO margin needs lambda < 1"));
    }
    let feedback = beta * lambda;
    let margin = if feedback == 0.0 {
        alpha
    } else {
        alpha + feedback / (inputs.mu_floor.powi(2) * inputs.s_b)
    };
    Ok(DpoStability {
        margin,
        stable: margin < 1.0,
    })
}

/// Full stability summary for one parameter setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub ipo: IpoStability,
    pub dpo: Option<DpoStability>,
    pub dpo_inputs: Option<DpoStabilityInputs>,
    pub rps: Option<RpsInstability>,
    pub jacobian_radius: Option<f64>,
    pub fixed_point: Option<SimplexVector>,
}

/// Orthonormal basis of `1^⊥` (Helmert vectors), one per column.
fn tangent_basis(k: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(k, k - 1);
    for c in 0..k - 1 {
        let m = (c + 1) as f64;
        let norm = (m * (m + 1.0)).sqrt();
        for r in 0..=c {
            b[(r, c)] = 1.0 / norm;
        }
        b[(c + 1, c)] = -m / norm;
    }
    b
}

/// Spectral radius of the step map's Jacobian at a fixed point, from central
/// differences (h = 1e-6) along an orthonormal tangent basis.
pub fn jacobian_spectral_radius<F, E>(step: F, pi_star: &SimplexVector) -> Result<f64>
where
    F: Fn(&SimplexVector) -> std::result::Result<SimplexVector, E>,
    E: std::fmt::Display,
{
    let h = 1e-6;
    let k = pi_star.len();
    let call = |v: &SimplexVector| step(v).map_err(|e| AnalysisError::StepFailed(e.to_string()));
    let residual = call(pi_star)?.max_abs_diff(pi_star);
    if residual > 1e-8 {
        return Err(AnalysisError::NotAFixedPoint(residual));
    }
    let basis = tangent_basis(k);
    let mut jac = DMatrix::zeros(k - 1, k - 1);
    for c in 0..k - 1 {
        let shift = |sign: f64| -> Result<SimplexVector> {
            let w: Vec<f64> = (0..k)
                .map(|i| pi_star[i] + sign * h * basis[(i, c)])
                .collect();
            Ok(SimplexVector::full_support(w, pi_star.role())?)
        };
        let plus = call(&shift(1.0)?)?;
        let minus = call(&shift(-1.0)?)?;
        for r in 0..k - 1 {
            let d: f64 = (0..k).map(|i| basis[(i, r)] * (plus[i] - minus[i])).sum();
            jac[(r, c)] = d / (2.0 * h);
        }
    }
    Ok(jac
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// `δ_i = (1−λ)Σ_j π_0,j (P_ij − P_{i+1,j})`.
    pub delta_i: Vec<f64>,
    pub delta: f64,
    /// `(exp(βλδ/(2(1−α))) − 1)⁻¹`; absent when α = 1 or δ = 0.
    pub eps_sst: Option<f64>,
    /// `(K−1)exp(−βλδ_1/(2(1−α)))`; absent when α = 1.
    pub eps_st_plus: Option<f64>,
    /// Bound in force: the SST one when every δ_i > 0, else the ST⁺ one.
    pub eps: Option<f64>,
    /// First index with `π_{t,1} ≥ 1 − ε`.
    pub first_collapsed: Option<usize>,
    /// First index from which `π_{t,1} ≥ 1 − ε` holds to the end of the run.
    pub collapsed_from: Option<usize>,
    /// First index from which entropy strictly decreases to the end of the run.
    pub entropy_decreasing_from: Option<usize>,
    pub entropy: Vec<f64>,
}

/// Collapse diagnostics for a run whose responses are already in preference order.
pub fn collapse_analysis(
    p: &PreferenceMatrix,
    pi_0: &SimplexVector,
    alpha: f64,
    beta: f64,
    lambda: f64,
    traj: &Trajectory,
) -> Result<CollapseReport> {
    let k = p.k();
    if pi_0.len() != k {
        return Err(ModelError::LengthMismatch {
            expected: k,
            got: pi_0.len(),
        }
        .into());
    }
    if !(0.0..=1.0).contains(&alpha) || !(0.0..1.0).contains(&lambda) {
        return Err(AnalysisError::Precondition(
            "need alpha in [0,1] and lambda in [0,1)",
        ));
    }
    if !(0..k).all(|i| ((i + 1)..k).all(|j| p.get(i, j) >= 0.5)) {
        return Err(AnalysisError::NotTransitive);
    }
    let delta_i: Vec<f64> = (0..k - 1)
        .map(|i| {
            (1.0 - lambda)
                * (0..k)
                    .map(|j| pi_0[j] * (p.get(i, j) - p.get(i + 1, j)))
                    .sum::<f64>()
        })
        .collect();
    let delta = delta_i.iter().copied().fold(f64::INFINITY, f64::min);
    let (eps_sst, eps_st_plus) = if alpha < 1.0 {
        let scale = beta * lambda / (2.0 * (1.0 - alpha));
        let sst = (delta > 0.0).then(|| 1.0 / ((scale * delta).exp_m1()));
        let stp = (k - 1) as f64 * (-scale * delta_i[0]).exp();
        (sst, Some(stp))
    } else {
        (None, None)
    };
    let eps = eps_sst.or(eps_st_plus);
    let top: Vec<f64> = traj.policies.iter().map(|pi| pi[0]).collect();
    let (first_collapsed, collapsed_from) = match eps {
        Some(e) => {
            let hit = |x: &f64| *x >= 1.0 - e;
            let first = top.iter().position(hit);
            let from = match top.iter().rposition(|x| !hit(x)) {
                None => Some(0),
                Some(last_miss) if last_miss + 1 < top.len() => Some(last_miss + 1),
                Some(_) => None,
            };
            (first, from)
        }
        None => (None, None),
    };
    let ent: Vec<f64> = traj.policies.iter().map(entropy).collect();
    let entropy_decreasing_from = match ent.windows(2).rposition(|w| !(w[1] < w[0])) {
        None => Some(0),
        Some(i) if i + 2 < ent.len() => Some(i + 1),
        Some(_) => None,
    };
    Ok(CollapseReport {
        delta_i,
        delta,
        eps_sst,
        eps_st_plus,
        eps,
        first_collapsed,
        collapsed_from,
        entropy_decreasing_from,
        entropy: ent,
    })
}

/// Shannon entropy `−Σ π ln π` (with `0 ln 0 = 0`).
pub fn entropy(pi: &SimplexVector) -> f64 {
    -pi.as_slice()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

pub fn top_mass(pi: &SimplexVector) -> f64 {
    pi.as_slice().iter().copied().fold(0.0, f64::max)
}

/// Mean over coordinates of the (population) variance of `π_{t,i}` after burn-in.
pub fn cycle_strength(traj: &Trajectory, burn_in: f64) -> f64 {
    let n = traj.len();
    let start = ((n as f64) * burn_in.clamp(0.0, 1.0)).floor() as usize;
    let tail = &traj.policies[start.min(n.saturating_sub(1))..];
    let k = traj.config.k();
    let m = tail.len() as f64;
    (0..k)
        .map(|i| {
            let mean = tail.iter().map(|p| p[i]).sum::<f64>() / m;
            tail.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>() / m
        })
        .sum::<f64>()
        / k as f64
}

/// `θ_i − θ_j` for `i < j` in lexicographic order, with `θ = β⁻¹ log(π/π_ref)`.
pub fn pairwise_gaps(pi: &SimplexVector, pi_ref: &SimplexVector, beta: f64) -> Vec<f64> {
    let theta: Vec<f64> = pi
        .ln()
        .iter()
        .zip(pi_ref.ln())
        .map(|(a, b)| (a - b) / beta)
        .collect();
    let k = theta.len();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            out.push(theta[i] - theta[j]);
        }
    }
    out
}
