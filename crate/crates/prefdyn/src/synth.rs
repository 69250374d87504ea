//! Seeded random instances: simplex points, structured preference matrices and scored corpora.

use crate::ingest::{ScoredInstance, ScoredResponse};
use crate::model::{sigmoid, ModelError, PreferenceMatrix, Role, SimplexVector};
use crate::structure::{classify, HtsSpec, StructureClass};
use rand::seq::SliceRandom;
use rand::Rng;

/// Uniform draw from the open simplex (flat Dirichlet).
pub fn random_simplex<R: Rng>(rng: &mut R, k: usize, role: Role) -> SimplexVector {
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    SimplexVector::normalized(w, role).expect("positive exponential weights")
}

/// Monotone link from score differences to win probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Link {
    Logistic {
        scale: f64,
    },
    /// `½ + d·slope`, clipped to `[0, 1]`.
    Linear {
        slope: f64,
    },
}

impl Link {
    pub fn apply(self, d: f64) -> f64 {
        match self {
            Link::Logistic { scale } => sigmoid(scale * d),
            Link::Linear { slope } => (0.5 + slope * d).clamp(0.0, 1.0),
        }
    }
}

/// `P_ij = link(r_i − r_j)` with nonincreasing scores, so index order is an ST order.
/// Scores are occasionally duplicated to produce tied rows.
pub fn random_st_matrix<R: Rng>(rng: &mut R, k: usize) -> Result<PreferenceMatrix, ModelError> {
    let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    for i in 1..k {
        if rng.random::<f64>() < 0.15 {
            r[i] = r[i - 1];
        }
    }
    r.sort_by(|a, b| b.total_cmp(a));
    let link = if rng.random::<bool>() {
        Link::Logistic {
            scale: rng.random_range(0.2..3.0),
        }
    } else {
        Link::Linear {
            slope: rng.random_range(0.05..0.5),
        }
    };
    PreferenceMatrix::from_upper(k, |i, j| link.apply(r[i] - r[j]))
}

fn random_upper<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k * k).map(|_| rng.random_range(0.05..0.95)).collect()
}

/// Random matrix with a Condorcet winner at a random index.
pub fn random_winner_instance<R: Rng>(
    rng: &mut R,
    k: usize,
) -> Result<(PreferenceMatrix, usize), ModelError> {
    let w = rng.random_range(0..k);
    let mut u = random_upper(rng, k);
    for j in 0..k {
        let x = rng.random_range(0.55..0.95);
        if j > w {
            u[w * k + j] = x;
        } else if j < w {
            u[j * k + w] = 1.0 - x;
        }
    }
    Ok((PreferenceMatrix::from_upper(k, |i, j| u[i * k + j])?, w))
}

/// Random matrix without a Condorcet winner, so its Smith set has at least three members.
pub fn random_smith_instance<R: Rng>(
    rng: &mut R,
    k: usize,
) -> Result<PreferenceMatrix, ModelError> {
    loop {
        let u = random_upper(rng, k);
        let p = PreferenceMatrix::from_upper(k, |i, j| u[i * k + j])?;
        if crate::structure::condorcet_winner(&p).is_none() {
            return Ok(p);
        }
    }
}

/// Random matrix whose strict-win graph has a directed cycle.
pub fn random_cyclic_matrix<R: Rng>(rng: &mut R, k: usize) -> Result<PreferenceMatrix, ModelError> {
    loop {
        let u = random_upper(rng, k);
        let p = PreferenceMatrix::from_upper(k, |i, j| u[i * k + j])?;
        if matches!(classify(&p), Ok(r) if r.class == StructureClass::Cyclic) {
            return Ok(p);
        }
    }
}

/// BT scores satisfying head–tail separation with head size `h`.
pub fn random_hts_scores<R: Rng>(rng: &mut R, k: usize, h: usize) -> HtsSpec {
    let delta: f64 = rng.random_range(3.0..6.0);
    let threshold = 8.0 * (h as f64 / k as f64 + (-delta).exp());
    let mut head = vec![rng.random_range(0.0..1.0)];
    for _ in 1..h {
        let below = *head.last().expect("nonempty");
        head.push(below + threshold * rng.random_range(1.05..1.5));
    }
    head.reverse();
    let mut tail: Vec<f64> = (h..k)
        .map(|_| -delta - rng.random_range(0.0..3.0))
        .collect();
    tail.sort_by(|a, b| b.total_cmp(a));
    let mut r = head;
    r.extend(tail);
    HtsSpec::new(r, h, delta).expect("parameters chosen inside the admissible range")
}

/// HelpSteer-style corpus: integer scores 0..=4 on `attributes` named attributes.
pub fn synthetic_corpus<R: Rng>(
    rng: &mut R,
    prompts: usize,
    responses: usize,
    attributes: usize,
) -> Vec<ScoredInstance> {
    let names: Vec<String> = (0..attributes).map(|a| format!("attr{a}")).collect();
    (0..prompts)
        .map(|p| ScoredInstance {
            prompt_id: format!("prompt-{p}"),
            responses: (0..responses)
                .map(|r| ScoredResponse {
                    id: format!("prompt-{p}-resp-{r}"),
                    scores: names
                        .iter()
                        .map(|n| (n.clone(), rng.random_range(0..=4) as f64))
                        .collect(),
                })
                .collect(),
        })
        .collect()
}

/// Random relabeling of `0..k`.
pub fn random_permutation<R: Rng>(rng: &mut R, k: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(rng);
    perm
}
