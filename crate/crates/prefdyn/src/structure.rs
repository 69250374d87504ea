//! Preference-structure classification: Condorcet winner, Smith set,
//! the transitivity hierarchy, majorization and head–tail separation.

use crate::model::PreferenceMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used by the ST/SST/ST⁺ inequality checks.
pub const ST_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("matrix is neither cyclic nor transitive under its aggregate-score order")]
    Unclassifiable(Box<StructureReport>),
    #[error("Smith set verification failed for {0:?}")]
    InternalVerificationFailure(Vec<usize>),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Most specific class found; variants are ordered by strength among the transitive ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureClass {
    Cyclic,
    Unclassified,
    Transitive,
    StronglyTransitive,
    StPlus,
    StrictlyStronglyTransitive,
}

impl StructureClass {
    pub fn is_transitive(self) -> bool {
        self >= StructureClass::Transitive
    }

    /// ST or stronger.
    pub fn is_st(self) -> bool {
        self >= StructureClass::StronglyTransitive
    }

    pub fn label(self) -> &'static str {
        match self {
            StructureClass::Cyclic => "cyclic",
            StructureClass::Unclassified => "unclassified",
            StructureClass::Transitive => "transitive",
            StructureClass::StronglyTransitive => "strongly-transitive",
            StructureClass::StPlus => "st-plus",
            StructureClass::StrictlyStronglyTransitive => "strictly-strongly-transitive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub condorcet_winner: Option<usize>,
    pub smith_set: Vec<usize>,
    pub class: StructureClass,
    /// Aggregate-score order, present for transitive classes.
    pub order: Option<Vec<usize>>,
    /// Adjacent positions `(a, a+1)` of `order` whose rows are identical.
    pub tied_positions: Vec<(usize, usize)>,
    /// A directed cycle `c_0 → c_1 → … → c_0` of strict wins, for cyclic matrices.
    pub cycle: Option<Vec<usize>>,
    /// Strict-win edges `i → j` with `P_ij > ½`.
    pub edges: Vec<(usize, usize)>,
}

/// Index `c` with `P_cj > ½` for every `j ≠ c`.
pub fn condorcet_winner(p: &PreferenceMatrix) -> Option<usize> {
    (0..p.k()).find(|&c| (0..p.k()).all(|j| j == c || p.get(c, j) > 0.5))
}

/// `true` when every member of `set` beats every non-member strictly.
pub fn is_dominant(p: &PreferenceMatrix, set: &[usize]) -> bool {
    let mut inside = vec![false; p.k()];
    for &i in set {
        inside[i] = true;
    }
    set.iter()
        .all(|&i| (0..p.k()).all(|j| inside[j] || p.get(i, j) > 0.5))
}

fn copeland(p: &PreferenceMatrix, i: usize) -> f64 {
    (0..p.k())
        .filter(|&j| j != i)
        .map(|j| {
            let v = p.get(i, j);
            if v > 0.5 {
                1.0
            } else if v == 0.5 {
                0.5
            } else {
                0.0
            }
        })
        .sum()
}

/// Inclusion-minimal dominant set, returned sorted.
///
/// Members of the Smith set strictly out-score non-members in Copeland score,
/// so it is the smallest dominant prefix of the score-sorted responses, taken
/// at block boundaries between distinct scores.
pub fn smith_set(p: &PreferenceMatrix) -> Result<Vec<usize>, StructureError> {
    let k = p.k();
    let scores: Vec<f64> = (0..k).map(|i| copeland(p, i)).collect();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut end = 1;
    loop {
        while end < k && scores[idx[end]] == scores[idx[end - 1]] {
            end += 1;
        }
        let mut set = idx[..end].to_vec();
        if end == k || is_dominant(p, &set) {
            set.sort_unstable();
            if !is_dominant(p, &set) {
                return Err(StructureError::InternalVerificationFailure(set));
            }
            return Ok(set);
        }
        end += 1;
    }
}

fn strict_edges(p: &PreferenceMatrix) -> Vec<(usize, usize)> {
    let k = p.k();
    let mut e = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i != j && p.get(i, j) > 0.5 {
                e.push((i, j));
            }
        }
    }
    e
}

/// Any directed cycle in the strict-win graph (necessarily of length ≥ 3).
pub fn find_cycle(p: &PreferenceMatrix) -> Option<Vec<usize>> {
    let k = p.k();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; k];
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        p: &PreferenceMatrix,
        v: usize,
        state: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for w in 0..p.k() {
            if w == v || p.get(v, w) <= 0.5 {
                continue;
            }
            match state[w] {
                1 => {
                    let start = stack.iter().position(|&x| x == w).expect("on-stack vertex");
                    return Some(stack[start..].to_vec());
                }
                0 => {
                    if let Some(c) = dfs(p, w, state, stack) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }

    (0..k).find_map(|s| {
        if state[s] == 0 {
            dfs(p, s, &mut state, &mut stack)
        } else {
            None
        }
    })
}

/// Responses sorted by aggregate score `Σ_j P_ij`, descending; ties go to the lower index.
pub fn aggregate_order(p: &PreferenceMatrix) -> Vec<usize> {
    let agg: Vec<f64> = (0..p.k()).map(|i| p.row(i).iter().sum()).collect();
    let mut idx: Vec<usize> = (0..p.k()).collect();
    idx.sort_by(|&a, &b| agg[b].total_cmp(&agg[a]).then(a.cmp(&b)));
    idx
}

fn is_st_order(p: &PreferenceMatrix, o: &[usize]) -> bool {
    let k = o.len();
    for a in 0..k {
        for b in (a + 1)..k {
            for c in (b + 1)..k {
                let pac = p.get(o[a], o[c]);
                if pac + ST_SLACK < p.get(o[a], o[b]) || pac + ST_SLACK < p.get(o[b], o[c]) {
                    return false;
                }
            }
        }
    }
    true
}

/// Row `i` weakly dominates row `j` with at least one strict entry.
fn strictly_dominates(p: &PreferenceMatrix, i: usize, j: usize) -> bool {
    let weak = (0..p.k()).all(|c| p.get(i, c) + ST_SLACK >= p.get(j, c));
    weak && (0..p.k()).any(|c| p.get(i, c) > p.get(j, c) + ST_SLACK)
}

fn rows_equal(p: &PreferenceMatrix, i: usize, j: usize) -> bool {
    (0..p.k()).all(|c| (p.get(i, c) - p.get(j, c)).abs() <= ST_SLACK)
}

/// Classifies `p` into the transitivity hierarchy.
pub fn classify(p: &PreferenceMatrix) -> Result<StructureReport, StructureError> {
    let mut report = StructureReport {
        condorcet_winner: condorcet_winner(p),
        smith_set: smith_set(p)?,
        class: StructureClass::Cyclic,
        order: None,
        tied_positions: Vec::new(),
        cycle: None,
        edges: strict_edges(p),
    };
    if let Some(c) = find_cycle(p) {
        report.cycle = Some(c);
        return Ok(report);
    }
    let order = aggregate_order(p);
    let k = order.len();
    let transitive = (0..k).all(|a| ((a + 1)..k).all(|b| p.get(order[a], order[b]) >= 0.5));
    if !transitive {
        report.class = StructureClass::Unclassified;
        return Err(StructureError::Unclassifiable(Box::new(report)));
    }
    report.tied_positions = (0..k - 1)
        .filter(|&a| rows_equal(p, order[a], order[a + 1]))
        .map(|a| (a, a + 1))
        .collect();
    report.class = if !is_st_order(p, &order) {
        StructureClass::Transitive
    } else if (0..k - 1).all(|a| strictly_dominates(p, order[a], order[a + 1])) {
        StructureClass::StrictlyStronglyTransitive
    } else if strictly_dominates(p, order[0], order[1]) {
        StructureClass::StPlus
    } else {
        StructureClass::StronglyTransitive
    };
    report.order = Some(order);
    Ok(report)
}

/// Every prefix average `(1/m)Σ_{k≤m} a_k`, `m < K`, is at least the global average.
pub fn is_majorized(a: &[f64]) -> bool {
    let n = a.len();
    if n == 0 {
        return true;
    }
    let mean = a.iter().sum::<f64>() / n as f64;
    let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut prefix = 0.0;
    for (m, x) in a.iter().enumerate().take(n - 1) {
        prefix += x;
        let avg = prefix / (m + 1) as f64;
        if avg < mean - 1e-12 * scale {
            return false;
        }
    }
    true
}

/// `P_i − P_j` is majorized and the rows differ.
pub fn maj_dominates(p: &PreferenceMatrix, i: usize, j: usize) -> Result<bool, StructureError> {
    if i == j {
        return Err(StructureError::Precondition(format!(
            "maj_dominates needs distinct rows, got {i} twice"
        )));
    }
    let diff: Vec<f64> = p.row(i).iter().zip(p.row(j)).map(|(a, b)| a - b).collect();
    Ok(!rows_equal(p, i, j) && is_majorized(&diff))
}

/// Bradley–Terry scores split into a head (first `h` entries) and a tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HtsSpec {
    r: Vec<f64>,
    h: usize,
    delta: f64,
}

impl HtsSpec {
    pub fn new(r: Vec<f64>, h: usize, delta: f64) -> Result<Self, StructureError> {
        if h == 0 || h >= r.len() {
            return Err(StructureError::Precondition(format!(
                "head size {h} must lie in (0, {})",
                r.len()
            )));
        }
        if !(delta > 3.0 * std::f64::consts::LN_2) {
            return Err(StructureError::Precondition(format!(
                "separation {delta} must exceed 3 ln 2"
            )));
        }
        Ok(HtsSpec { r, h, delta })
    }

    pub fn scores(&self) -> &[f64] {
        &self.r
    }

    pub fn head(&self) -> usize {
        self.h
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Minimum head gap `8(H/K + e^{−δ})`.
    pub fn gap_threshold(&self) -> f64 {
        8.0 * (self.h as f64 / self.r.len() as f64 + (-self.delta).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HtsViolation {
    /// Some head score is negative or some tail score exceeds `−δ`.
    HeadTailSeparation,
    /// Some head pair is closer than the gap threshold.
    HeadGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HtsReport {
    pub holds: bool,
    pub violated: Option<HtsViolation>,
}

pub fn hts_check(spec: &HtsSpec) -> HtsReport {
    let (head, tail) = spec.r.split_at(spec.h);
    let violated = if head.iter().any(|&x| x < 0.0) || tail.iter().any(|&x| x > -spec.delta) {
        Some(HtsViolation::HeadTailSeparation)
    } else {
        let t = spec.gap_threshold();
        let close = (0..head.len()).any(|i| ((i + 1)..head.len()).any(|j| head[i] - head[j] < t));
        close.then_some(HtsViolation::HeadGap)
    };
    HtsReport {
        holds: violated.is_none(),
        violated,
    }
}
