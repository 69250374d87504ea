//! Domain types shared by every solver: preference matrices, simplex vectors,
//! sum-zero logits, and the two mixture operators used by the dynamics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the `P_ii = 1/2` and `P_ij + P_ji = 1` checks.
pub const MATRIX_TOL: f64 = 1e-12;
/// Tolerance for `sum(w) = 1` on simplex vectors.
pub const SIMPLEX_TOL: f64 = 1e-10;
/// Largest supported number of responses.
pub const MAX_K: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("matrix is not square: row {row} has {len} entries, expected {k}")]
    NotSquare { row: usize, len: usize, k: usize },
    #[error("need at least 2 responses, got {0}")]
    TooFewResponses(usize),
    #[error("at most {MAX_K} responses supported, got {0}")]
    TooManyResponses(usize),
    #[error("diagonal entry ({i},{i}) = {value} is not 1/2")]
    DiagonalNotHalf { i: usize, value: f64 },
    #[error("entries ({i},{j}) and ({j},{i}) sum to {sum}, not 1")]
    RowColumnSumViolation { i: usize, j: usize, sum: f64 },
    #[error("entry ({i},{j}) = {value} outside [0,1]")]
    EntryOutOfRange { i: usize, j: usize, value: f64 },
    #[error("non-finite input at index {0}")]
    NonFiniteInput(usize),
    #[error("simplex entries sum to {0}, not 1")]
    SimplexSum(f64),
    #[error("negative simplex entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("zero-support entry at index {0} where full support is required")]
    ZeroSupport(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parameter {name} = {value} out of range")]
    ParameterOutOfRange { name: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without cancellation.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// A validated K×K pairwise preference matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixFile", into = "MatrixFile")]
pub struct PreferenceMatrix {
    k: usize,
    p: Vec<f64>,
}

/// On-disk shape of a preference matrix: `{"k": K, "p": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub k: usize,
    pub p: Vec<Vec<f64>>,
}

impl TryFrom<MatrixFile> for PreferenceMatrix {
    type Error = ModelError;
    fn try_from(f: MatrixFile) -> Result<Self> {
        if f.p.len() != f.k {
            return Err(ModelError::LengthMismatch {
                expected: f.k,
                got: f.p.len(),
            });
        }
        validate_preference(&f.p)
    }
}

impl From<PreferenceMatrix> for MatrixFile {
    fn from(m: PreferenceMatrix) -> Self {
        MatrixFile {
            k: m.k,
            p: m.to_rows(),
        }
    }
}

/// Checks the preference-matrix invariants without repairing anything.
pub fn validate_preference(raw: &[Vec<f64>]) -> Result<PreferenceMatrix> {
    let k = raw.len();
    if k < 2 {
        return Err(ModelError::TooFewResponses(k));
    }
    if k > MAX_K {
        return Err(ModelError::TooManyResponses(k));
    }
    for (row, r) in raw.iter().enumerate() {
        if r.len() != k {
            return Err(ModelError::NotSquare {
                row,
                len: r.len(),
                k,
            });
        }
    }
    for i in 0..k {
        for j in 0..k {
            let v = raw[i][j];
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(ModelError::EntryOutOfRange { i, j, value: v });
            }
        }
    }
    for i in 0..k {
        if (raw[i][i] - 0.5).abs() > MATRIX_TOL {
            return Err(ModelError::DiagonalNotHalf {
                i,
                value: raw[i][i],
            });
        }
        for j in (i + 1)..k {
            let sum = raw[i][j] + raw[j][i];
            if (sum - 1.0).abs() > MATRIX_TOL {
                return Err(ModelError::RowColumnSumViolation { i, j, sum });
            }
        }
    }
    Ok(PreferenceMatrix {
        k,
        p: raw.iter().flatten().copied().collect(),
    })
}

impl PreferenceMatrix {
    /// Builds a matrix from its strict upper triangle, completing `P_ji = 1 - P_ij`.
    pub fn from_upper(k: usize, upper: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut rows = vec![vec![0.5; k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                let v = upper(i, j);
                rows[i][j] = v;
                rows[j][i] = 1.0 - v;
            }
        }
        validate_preference(&rows)
    }

    /// The all-½ matrix.
    pub fn indifferent(k: usize) -> Result<Self> {
        Self::from_upper(k, |_, _| 0.5)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.k..(i + 1) * self.k]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|i| self.row(i).to_vec()).collect()
    }

    /// `P·v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.k);
        (0..self.k)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Relabels responses: entry `(a,b)` of the result is `P[perm[a]][perm[b]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k;
        let mut p = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                p[a * k + b] = self.get(perm[a], perm[b]);
            }
        }
        PreferenceMatrix { k, p }
    }

    /// Copy with every entry clamped into `[lo, 1-lo]`, preserving complementarity.
    pub fn clamped(&self, lo: f64) -> Self {
        let k = self.k;
        let mut p = self.p.clone();
        for i in 0..k {
            for j in (i + 1)..k {
                let v = self.get(i, j).clamp(lo, 1.0 - lo);
                p[i * k + j] = v;
                p[j * k + i] = 1.0 - v;
            }
        }
        PreferenceMatrix { k, p }
    }

    /// Convex combination `w·self + (1-w)·other`.
    pub fn blend(&self, other: &Self, w: f64) -> Result<Self> {
        if other.k != self.k {
            return Err(ModelError::LengthMismatch {
                expected: self.k,
                got: other.k,
            });
        }
        Self::from_upper(self.k, |i, j| {
            w * self.get(i, j) + (1.0 - w) * other.get(i, j)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serialization cannot fail")
    }
}

/// Rock–paper–scissors matrix: `P_12 = P_23 = P_31 = 1/2 + a`.
pub fn rps(a: f64) -> Result<PreferenceMatrix> {
    if !(0.0..=0.5).contains(&a) {
        return Err(ModelError::ParameterOutOfRange {
            name: "a",
            value: a,
        });
    }
    PreferenceMatrix::from_upper(3, |i, j| match (i, j) {
        (0, 1) | (1, 2) => 0.5 + a,
        _ => 0.5 - a,
    })
}

/// Bradley–Terry matrix `P_ij = sigmoid(r_i - r_j)`.
pub fn bt_matrix(r: &[f64]) -> Result<PreferenceMatrix> {
    if let Some(i) = r.iter().position(|x| !x.is_finite()) {
        return Err(ModelError::NonFiniteInput(i));
    }
    PreferenceMatrix::from_upper(r.len(), |i, j| sigmoid(r[i] - r[j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Policy,
    Sampling,
    Reference,
    Anchor,
}

/// A probability vector over K responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector {
    w: Vec<f64>,
    #[serde(default)]
    role: Role,
}

impl SimplexVector {
    /// Validates `w` as a probability vector (zeros allowed).
    pub fn new(w: Vec<f64>, role: Role) -> Result<Self> {
        for (index, &value) in w.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteInput(index));
            }
            if value < 0.0 {
                return Err(ModelError::NegativeEntry { index, value });
            }
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(ModelError::SimplexSum(s));
        }
        Ok(SimplexVector { w, role })
    }

    /// Like [`SimplexVector::new`] but also requires every entry to be positive.
    pub fn full_support(w: Vec<f64>, role: Role) -> Result<Self> {
        let v = Self::new(w, role)?;
        v.require_full_support()?;
        Ok(v)
    }

    /// Rescales nonnegative weights to sum one.
    pub fn normalized(w: Vec<f64>, role: Role) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(ModelError::SimplexSum(s));
        }
        Self::new(w.into_iter().map(|x| x / s).collect(), role)
    }

    pub fn uniform(k: usize, role: Role) -> Self {
        SimplexVector {
            w: vec![1.0 / k as f64; k],
            role,
        }
    }

    /// Vertex `e_i`.
    pub fn vertex(k: usize, i: usize, role: Role) -> Self {
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        SimplexVector { w, role }
    }

    pub fn require_full_support(&self) -> Result<()> {
        match self.w.iter().position(|&x| x <= 0.0) {
            Some(i) => Err(ModelError::ZeroSupport(i)),
            None => Ok(()),
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    pub fn ln(&self) -> Vec<f64> {
        self.w.iter().map(|x| x.ln()).collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        SimplexVector {
            w: perm.iter().map(|&i| self.w[i]).collect(),
            role: self.role,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.w, &other.w)
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.w[i]
    }
}

/// `‖a − b‖_∞`.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Subtracts the mean so the entries sum to zero.
pub fn center(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

/// Logits fixed to the sum-zero gauge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitVector {
    theta: Vec<f64>,
}

impl LogitVector {
    /// Projects arbitrary logits onto the sum-zero gauge.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if let Some(i) = raw.iter().position(|x| !x.is_finite()) {
            return Err(ModelError::NonFiniteInput(i));
        }
        Ok(LogitVector { theta: center(raw) })
    }

    pub fn zeros(k: usize) -> Self {
        LogitVector {
            theta: vec![0.0; k],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `max θ − min θ`.
    pub fn spread(&self) -> f64 {
        let mx = self.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mn = self.theta.iter().copied().fold(f64::INFINITY, f64::min);
        mx - mn
    }
}

impl std::ops::Index<usize> for LogitVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.theta[i]
    }
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Result<SimplexVector> {
    if let Some(i) = z.iter().position(|x| !x.is_finite()) {
        return Err(ModelError::NonFiniteInput(i));
    }
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(SimplexVector {
        w: e.into_iter().map(|x| x / s).collect(),
        role: Role::Policy,
    })
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ModelError::ParameterOutOfRange { name, value })
    }
}

fn check_same_len(a: &SimplexVector, b: &SimplexVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(ModelError::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `pi^alpha ⊙ pi_ref^(1-alpha)`, renormalized; computed in log space.
pub fn geometric_mix(
    pi: &SimplexVector,
    pi_ref: &SimplexVector,
    alpha: f64,
) -> Result<SimplexVector> {
    check_unit("alpha", alpha)?;
    check_same_len(pi, pi_ref)?;
    pi.require_full_support()?;
    pi_ref.require_full_support()?;
    if alpha == 1.0 {
        return Ok(pi.clone());
    }
    if alpha == 0.0 {
        return Ok(pi_ref.clone().with_role(pi.role));
    }
    let z: Vec<f64> =
        pi.w.iter()
            .zip(&pi_ref.w)
            .map(|(a, b)| alpha * a.ln() + (1.0 - alpha) * b.ln())
            .collect();
    Ok(softmax(&z)?.with_role(pi.role))
}

/// `lambda·pi + (1-lambda)·pi_0`.
pub fn affine_mix(pi: &SimplexVector, pi_0: &SimplexVector, lambda: f64) -> Result<SimplexVector> {
    check_unit("lambda", lambda)?;
    check_same_len(pi, pi_0)?;
    let w =
        pi.w.iter()
            .zip(&pi_0.w)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
    Ok(SimplexVector {
        w,
        role: Role::Sampling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Ipo,
    Dpo,
}

/// Parameters of one MRS run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub pi_ref: SimplexVector,
    pub pi_0: SimplexVector,
    pub pi_1: SimplexVector,
    pub horizon: usize,
    pub tolerance: f64,
    pub solver: SolverKind,
}

impl DynamicsConfig {
    /// Uniform anchors and start, `T = 3000`, tolerance `1e-12`.
    pub fn uniform(k: usize, alpha: f64, beta: f64, lambda: f64, solver: SolverKind) -> Self {
        DynamicsConfig {
            alpha,
            beta,
            lambda,
            pi_ref: SimplexVector::uniform(k, Role::Reference),
            pi_0: SimplexVector::uniform(k, Role::Anchor),
            pi_1: SimplexVector::uniform(k, Role::Policy),
            horizon: 3000,
            tolerance: 1e-12,
            solver,
        }
    }

    pub fn k(&self) -> usize {
        self.pi_1.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("alpha", self.alpha)?;
        check_unit("lambda", self.lambda)?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(ModelError::ParameterOutOfRange {
                name: "beta",
                value: self.beta,
            });
        }
        if self.horizon == 0 {
            return Err(ModelError::ParameterOutOfRange {
                name: "horizon",
                value: 0.0,
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(ModelError::ParameterOutOfRange {
                name: "tolerance",
                value: self.tolerance,
            });
        }
        for v in [&self.pi_ref, &self.pi_0, &self.pi_1] {
            check_same_len(&self.pi_1, v)?;
            Self::check_simplex(v)?;
            v.require_full_support()?;
        }
        Ok(())
    }

    // Serde bypasses the constructors, so re-check sums here.
    fn check_simplex(v: &SimplexVector) -> Result<()> {
        SimplexVector::new(v.w.clone(), v.role).map(|_| ())
    }
}

/// Iterates `π_1..π_T` of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub policies: Vec<SimplexVector>,
    /// First step index (0-based into `policies`) from which the run stayed within tolerance.
    pub converged_at: Option<usize>,
    /// Set when the run stopped early because a coordinate underflowed.
    pub underflow_at: Option<usize>,
    pub config: DynamicsConfig,
}

impl Trajectory {
    pub fn last(&self) -> &SimplexVector {
        self.policies.last().expect("trajectory always holds pi_1")
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}
