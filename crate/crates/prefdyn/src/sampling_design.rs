//! Instance-dependent sampling designs that make the IPO optimum rank a
//! Condorcet winner (or the whole Smith set) on top, plus the counterexample
//! matrices showing that no fixed sampling can do this for every P.

use crate::ipo::ipo_solve;
use crate::model::{ModelError, PreferenceMatrix, Role, SimplexVector};
use crate::structure::{condorcet_winner, smith_set, StructureError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pointwise slack allowed in `(P·ν)_i ≤ ½` for the maximin strategy.
pub const MAXIMIN_TOL: f64 = 1e-9;
const MAX_ROUNDS: usize = 1_000_000;
const MAX_HALVINGS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("matrix has no Condorcet winner")]
    NoWinner,
    #[error("maximin solver stalled with gap {gap:e} after {rounds} rounds")]
    SolverStall { gap: f64, rounds: usize },
    #[error("no certifying mixture found down to epsilon {0:e}")]
    EpsilonUnderflow(f64),
}

pub type Result<T> = std::result::Result<T, SamplingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetAxiom {
    CondorcetTop,
    SmithTop,
}

/// How the pre-mixing distribution on the Smith set was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    /// Point mass on the Condorcet winner.
    Winner,
    /// Maximin strategy of the game restricted to the Smith set.
    Maximin,
    /// Strategy maximizing the worst member-minus-outsider gap of `P·μ`.
    PairwiseMargin,
    /// Smith set is everything; any full-support μ works.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDesign {
    pub mu: SimplexVector,
    pub epsilon: f64,
    pub target: TargetAxiom,
    pub construction: Construction,
    /// `min` over required pairs of `policy_i − policy_j` at β = 1, π_ref uniform.
    pub margin: f64,
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// Equilibrium with support `s` of the skew game `A = P − ½`, if one exists there.
fn solve_on_support(a: &[Vec<f64>], s: &[usize]) -> Option<Vec<f64>> {
    let m = s.len();
    let mut sys = DMatrix::zeros(m + 1, m);
    for (r, &i) in s.iter().enumerate() {
        for (c, &j) in s.iter().enumerate() {
            sys[(r, c)] = a[i][j] - 0.5;
        }
    }
    for c in 0..m {
        sys[(m, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    let y = sys.svd(true, true).solve(&rhs, 1e-13).ok()?;
    if y.iter().any(|&v| !(v > -1e-12)) {
        return None;
    }
    let mut nu = vec![0.0; a.len()];
    for (c, &j) in s.iter().enumerate() {
        nu[j] = y[c].max(0.0);
    }
    let total: f64 = nu.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    nu.iter_mut().for_each(|v| *v /= total);
    Some(nu)
}

fn worst_excess(a: &[Vec<f64>], nu: &[f64]) -> f64 {
    mat_vec(a, nu)
        .iter()
        .fold(f64::NEG_INFINITY, |m, v| m.max(v - 0.5))
}

/// Mixed strategy `ν` with `(P_sub·ν)_i ≤ ½ + 1e-9` for every row.
///
/// Multiplicative-weights self-play ranks candidate supports; each prefix of
/// that ranking is then solved exactly and the pointwise bound re-verified,
/// which reaches the tolerance long before the averaged iterate would.
pub fn maximin_strategy(p_sub: &PreferenceMatrix) -> Result<SimplexVector> {
    let a = p_sub.to_rows();
    let n = a.len();
    let ln_n = (n as f64).ln();
    let mut cum = vec![0.0; n];
    let mut avg = vec![0.0; n];
    let mut nu = vec![1.0 / n as f64; n];
    let mut checkpoint = 1;
    let mut gap = f64::INFINITY;
    for t in 1..=MAX_ROUNDS {
        for (s, v) in avg.iter_mut().zip(&nu) {
            *s += v;
        }
        let payoff = mat_vec(&a, &nu);
        for (c, v) in cum.iter_mut().zip(&payoff) {
            *c += v - 0.5;
        }
        let eta = (ln_n.max(1e-3) / t as f64).sqrt();
        let mx = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = cum.iter().map(|c| (eta * (c - mx)).exp()).collect();
        let z: f64 = w.iter().sum();
        nu = w.into_iter().map(|x| x / z).collect();

        if t == checkpoint || t == MAX_ROUNDS {
            checkpoint *= 2;
            let mean: Vec<f64> = avg.iter().map(|s| s / t as f64).collect();
            gap = gap.min(worst_excess(&a, &mean));
            if gap <= MAXIMIN_TOL {
                return Ok(SimplexVector::normalized(mean, Role::Sampling)?);
            }
            let mut rank: Vec<usize> = (0..n).collect();
            rank.sort_by(|&x, &y| mean[y].total_cmp(&mean[x]).then(x.cmp(&y)));
            for m in 1..=n {
                let mut support = rank[..m].to_vec();
                support.sort_unstable();
                if let Some(cand) = solve_on_support(&a, &support) {
                    if worst_excess(&a, &cand) <= MAXIMIN_TOL {
                        return Ok(SimplexVector::normalized(cand, Role::Sampling)?);
                    }
                }
            }
        }
    }
    Err(SamplingError::SolverStall {
        gap,
        rounds: MAX_ROUNDS,
    })
}

fn policy_margin(
    p: &PreferenceMatrix,
    mu: &SimplexVector,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    let uniform = SimplexVector::uniform(p.k(), Role::Reference);
    let pol = ipo_solve(p, mu, &uniform, 1.0)?.policy;
    Ok(pairs
        .iter()
        .map(|&(i, j)| pol[i] - pol[j])
        .fold(f64::INFINITY, f64::min))
}

/// Re-derives a design's margin from scratch.
pub fn certificate_margin(p: &PreferenceMatrix, design: &SamplingDesign) -> Result<f64> {
    if design.construction == Construction::Vacuous {
        return Ok(f64::INFINITY);
    }
    policy_margin(p, &design.mu, &required_pairs(p, design.target)?)
}

fn required_pairs(p: &PreferenceMatrix, target: TargetAxiom) -> Result<Vec<(usize, usize)>> {
    let k = p.k();
    let top: Vec<usize> = match target {
        TargetAxiom::CondorcetTop => vec![condorcet_winner(p).ok_or(SamplingError::NoWinner)?],
        TargetAxiom::SmithTop => smith_set(p)?,
    };
    let mut pairs = Vec::new();
    for &i in &top {
        for j in (0..k).filter(|j| !top.contains(j)) {
            pairs.push((i, j));
        }
    }
    Ok(pairs)
}

/// Halves ε from ½ until `(1−ε)·base + ε·uniform` certifies every pair.
fn epsilon_search(
    p: &PreferenceMatrix,
    base: &[f64],
    pairs: &[(usize, usize)],
    target: TargetAxiom,
    construction: Construction,
) -> Result<SamplingDesign> {
    let k = p.k() as f64;
    let mut eps = 0.5;
    for _ in 0..=MAX_HALVINGS {
        let w: Vec<f64> = base.iter().map(|b| (1.0 - eps) * b + eps / k).collect();
        let mu = SimplexVector::normalized(w, Role::Sampling)?;
        let margin = policy_margin(p, &mu, pairs)?;
        if margin > 0.0 {
            return Ok(SamplingDesign {
                mu,
                epsilon: eps,
                target,
                construction,
                margin,
            });
        }
        eps /= 2.0;
    }
    Err(SamplingError::EpsilonUnderflow(eps * 2.0))
}

/// Sampling `(1−ε)e_c + ε·uniform` that puts the Condorcet winner strictly on top.
pub fn condorcet_top_sampling(p: &PreferenceMatrix) -> Result<SamplingDesign> {
    let c = condorcet_winner(p).ok_or(SamplingError::NoWinner)?;
    let mut base = vec![0.0; p.k()];
    base[c] = 1.0;
    let pairs = required_pairs(p, TargetAxiom::CondorcetTop)?;
    epsilon_search(
        p,
        &base,
        &pairs,
        TargetAxiom::CondorcetTop,
        Construction::Winner,
    )
}

/// Distribution on `s` maximizing `min_{i∈s, j∉s} (P·μ)_i − (P·μ)_j`,
/// found by multiplicative weights against the worst pair.
fn pairwise_margin_strategy(p: &PreferenceMatrix, s: &[usize]) -> Vec<f64> {
    let k = p.k();
    let pairs: Vec<(usize, usize)> = s
        .iter()
        .flat_map(|&i| (0..k).filter(|j| !s.contains(j)).map(move |j| (i, j)))
        .collect();
    let rounds = 20_000;
    let eta = ((s.len() as f64).ln().max(1e-3) / rounds as f64).sqrt() * 4.0;
    let mut cum = vec![0.0; s.len()];
    let mut avg = vec![0.0; s.len()];
    let mut w = vec![1.0 / s.len() as f64; s.len()];
    for _ in 0..rounds {
        for (a, x) in avg.iter_mut().zip(&w) {
            *a += x;
        }
        let value = |&(i, j): &(usize, usize)| -> f64 {
            s.iter()
                .zip(&w)
                .map(|(&c, x)| x * (p.get(i, c) - p.get(j, c)))
                .sum()
        };
        let &(wi, wj) = pairs
            .iter()
            .min_by(|a, b| value(a).total_cmp(&value(b)))
            .expect("nonempty pairs");
        for (idx, &c) in s.iter().enumerate() {
            cum[idx] += p.get(wi, c) - p.get(wj, c);
        }
        let mx = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = cum.iter().map(|c| (eta * (c - mx)).exp()).collect();
        let z: f64 = e.iter().sum();
        w = e.into_iter().map(|x| x / z).collect();
    }
    let mut full = vec![0.0; k];
    let total: f64 = avg.iter().sum();
    for (idx, &c) in s.iter().enumerate() {
        full[c] = avg[idx] / total;
    }
    full
}

/// Sampling that ranks every Smith-set member strictly above every outsider.
///
/// Starts from the maximin strategy on the Smith set. A member outside that
/// strategy's support can score below an outsider, so when no ε certifies it
/// the search is repeated from the best member-over-outsider strategy.
pub fn smith_top_sampling(p: &PreferenceMatrix) -> Result<SamplingDesign> {
    let s = smith_set(p)?;
    let k = p.k();
    if s.len() == k {
        return Ok(SamplingDesign {
            mu: SimplexVector::uniform(k, Role::Sampling),
            epsilon: 1.0,
            target: TargetAxiom::SmithTop,
            construction: Construction::Vacuous,
            margin: f64::INFINITY,
        });
    }
    let pairs = required_pairs(p, TargetAxiom::SmithTop)?;
    let nu = if s.len() == 1 {
        SimplexVector::uniform(1, Role::Sampling)
    } else {
        maximin_strategy(&PreferenceMatrix::from_upper(s.len(), |a, b| {
            p.get(s[a], s[b])
        })?)?
    };
    let mut base = vec![0.0; k];
    for (a, &i) in s.iter().enumerate() {
        base[i] = nu[a];
    }
    let construction = if s.len() == 1 {
        Construction::Winner
    } else {
        Construction::Maximin
    };
    match epsilon_search(p, &base, &pairs, TargetAxiom::SmithTop, construction) {
        Ok(d) => Ok(d),
        Err(SamplingError::EpsilonUnderflow(_)) => {
            let alt = pairwise_margin_strategy(p, &s);
            epsilon_search(
                p,
                &alt,
                &pairs,
                TargetAxiom::SmithTop,
                Construction::PairwiseMargin,
            )
        }
        Err(e) => Err(e),
    }
}

/// Three-response matrix whose Condorcet winner (response 0) is ranked below
/// response 1 by IPO under `mu`.
pub fn demoted_winner_matrix(mu: &SimplexVector) -> Result<PreferenceMatrix> {
    if mu.len() != 3 {
        return Err(ModelError::LengthMismatch {
            expected: 3,
            got: mu.len(),
        }
        .into());
    }
    mu.require_full_support()?;
    let (m1, m2, m3) = (mu[0], mu[1], mu[2]);
    Ok(PreferenceMatrix::from_upper(3, |i, j| match (i, j) {
        (0, _) => 0.5 + m3 / 4.0,
        _ => 0.5 + (2.0 * m1 + 2.0 * m2 + m3) / 4.0,
    })?)
}

/// Rank-shuffling family: `P_0i = ½ + ε`, `P_ij = 1 − ε` for `0 < i < j`.
pub fn rank_shift_family(k: usize, eps: f64) -> Result<PreferenceMatrix> {
    if k <= 2 || !(eps > 0.0 && eps < 0.125) {
        return Err(ModelError::ParameterOutOfRange {
            name: "eps",
            value: eps,
        }
        .into());
    }
    Ok(PreferenceMatrix::from_upper(k, |i, _| {
        if i == 0 {
            0.5 + eps
        } else {
            1.0 - eps
        }
    })?)
}

/// The fixed 4×4 transitive matrix (order 0 ≻ 1 ≻ 2 ≻ 3) proposed as never order-preserving.
pub fn fragile_order_matrix() -> PreferenceMatrix {
    PreferenceMatrix::from_upper(4, |i, j| match (i, j) {
        (0, 1) => 0.75,
        (0, _) => 0.625,
        (1, _) => 0.875,
        _ => 0.625,
    })
    .expect("constant matrix is valid")
}

/// Both matrices of the fragility construction.
pub fn rank_shift_pair(k: usize, eps: f64) -> Result<(PreferenceMatrix, PreferenceMatrix)> {
    Ok((rank_shift_family(k, eps)?, fragile_order_matrix()))
}

/// Searches the full-support simplex grid of the given step for a sampling
/// whose IPO policy is nonincreasing along `order`.
pub fn find_order_preserving_sampling(
    p: &PreferenceMatrix,
    order: &[usize],
    step: f64,
) -> Result<Option<SimplexVector>> {
    let k = p.k();
    let n = (1.0 / step).round() as usize;
    if n < k {
        return Ok(None);
    }
    let uniform = SimplexVector::uniform(k, Role::Reference);
    let mut found = None;
    let mut counts = vec![0usize; k];
    let mut visit = |counts: &[usize]| -> Result<bool> {
        let w: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let mu = SimplexVector::normalized(w, Role::Sampling)?;
        let pol = ipo_solve(p, &mu, &uniform, 1.0)?.policy;
        if order.windows(2).all(|w| pol[w[0]] >= pol[w[1]]) {
            found = Some(mu);
            return Ok(true);
        }
        Ok(false)
    };
    compositions(&mut counts, 0, n, &mut visit)?;
    Ok(found)
}

/// Calls `f` on every split of `left` into positive parts filling `counts[pos..]`;
/// stops early once `f` returns `true`.
fn compositions(
    counts: &mut Vec<usize>,
    pos: usize,
    left: usize,
    f: &mut impl FnMut(&[usize]) -> Result<bool>,
) -> Result<bool> {
    let k = counts.len();
    if pos == k - 1 {
        counts[pos] = left;
        return f(counts);
    }
    let rest = k - pos - 1;
    for c in 1..=left.saturating_sub(rest) {
        counts[pos] = c;
        if compositions(counts, pos + 1, left - c, f)? {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bt_matrix, rps};
    use approx::assert_abs_diff_eq;

    #[test]
    fn maximin_examples() {
        let nu = maximin_strategy(&rps(0.3).unwrap()).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(nu[i], 1.0 / 3.0, epsilon = 1e-12);
        }
        let two = PreferenceMatrix::from_upper(2, |_, _| 0.6).unwrap();
        let nu = maximin_strategy(&two).unwrap();
        assert_abs_diff_eq!(nu[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn bt_condorcet_succeeds_at_half() {
        let d = condorcet_top_sampling(&bt_matrix(&[1.0, 0.0, -1.0]).unwrap()).unwrap();
        assert_eq!(d.epsilon, 0.5);
        assert!(d.margin > 0.0);
    }

    #[test]
    fn tie_means_no_winner() {
        let p = PreferenceMatrix::from_upper(3, |i, j| if (i, j) == (0, 1) { 0.5 } else { 0.7 })
            .unwrap();
        assert!(matches!(
            condorcet_top_sampling(&p),
            Err(SamplingError::NoWinner)
        ));
    }

    #[test]
    fn rps_smith_top_is_vacuous() {
        let d = smith_top_sampling(&rps(0.2).unwrap()).unwrap();
        assert_eq!(d.construction, Construction::Vacuous);
        assert!(d.margin.is_infinite());
    }

    fn rps_over_dominated(member_weak: bool) -> PreferenceMatrix {
        // 0,1,2 form a cycle over 3 and 4; with `member_weak`, 3 beats 0 and
        // so joins the top cycle while losing heavily to 1 and 2.
        PreferenceMatrix::from_upper(5, |i, j| {
            if j <= 2 {
                if (i, j) == (0, 2) {
                    0.2
                } else {
                    0.8
                }
            } else if !member_weak {
                0.7
            } else if j == 3 {
                if i == 0 {
                    0.45
                } else {
                    0.95
                }
            } else {
                0.55
            }
        })
        .unwrap()
    }

    #[test]
    fn smith_top_block_cycle() {
        let p = rps_over_dominated(false);
        assert_eq!(smith_set(&p).unwrap(), vec![0, 1, 2]);
        let d = smith_top_sampling(&p).unwrap();
        assert_eq!(d.construction, Construction::Maximin);
        assert!(d.margin > 0.0);
    }

    #[test]
    fn maximin_alone_can_miss_a_smith_member() {
        let p = rps_over_dominated(true);
        assert_eq!(smith_set(&p).unwrap(), vec![0, 1, 2, 3]);
        let d = smith_top_sampling(&p).unwrap();
        assert_eq!(d.construction, Construction::PairwiseMargin);
        assert!(d.margin > 0.0);
        assert_abs_diff_eq!(
            certificate_margin(&p, &d).unwrap(),
            d.margin,
            epsilon = 1e-12
        );
    }

    #[test]
    fn demoted_winner_gap_at_uniform() {
        let u = SimplexVector::uniform(3, Role::Sampling);
        let p = demoted_winner_matrix(&u).unwrap();
        let pm = p.mul_vec(u.as_slice());
        assert_abs_diff_eq!(pm[1] - pm[0], 1.0 / 18.0, epsilon = 1e-15);
        assert_eq!(condorcet_winner(&p), Some(0));
    }

    #[test]
    fn rank_shift_family_flips_order() {
        let k = 5;
        let p = rank_shift_family(k, 0.01).unwrap();
        let uniform = SimplexVector::uniform(k, Role::Reference);
        for j in 1..k {
            let mut w = vec![1e-6; k];
            w[j] = 1.0 - 1e-6 * (k - 1) as f64;
            let mu = SimplexVector::normalized(w, Role::Sampling).unwrap();
            let pol = ipo_solve(&p, &mu, &uniform, 1.0).unwrap().policy;
            let above = (1..k).filter(|&i| pol[i] > pol[0]).count();
            assert_eq!(above, j - 1);
        }
    }
}
