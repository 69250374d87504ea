//! Attribute-scored corpora to preference matrices.
//!
//! Corpus files are JSON Lines, one prompt per line:
//! `{"prompt_id": "...", "responses": [{"id": "...", "scores": {"helpfulness": 3, ...}}]}`.
//! Every random draw comes from a ChaCha8 stream seeded per instance, so output
//! does not depend on thread scheduling.

use crate::model::{sigmoid, ModelError, PreferenceMatrix};
use crate::structure::{classify, StructureError, StructureReport};
use crate::sweep::Execution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

/// Score differences above this are logged; the sigmoid saturates past it.
pub const LARGE_SCORE_GAP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("prompt {prompt_id} has {have} responses, {need} requested")]
    TooFewResponses {
        prompt_id: String,
        have: usize,
        need: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub id: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub prompt_id: String,
    pub responses: Vec<ScoredResponse>,
}

impl ScoredInstance {
    /// Attribute names shared by every response, sorted.
    pub fn attributes(&self) -> Vec<&str> {
        self.responses
            .first()
            .map(|r| r.scores.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.responses.len() < 2 {
            return Err(format!(
                "prompt {} has fewer than 2 responses",
                self.prompt_id
            ));
        }
        let keys: Vec<&String> = self.responses[0].scores.keys().collect();
        if keys.is_empty() {
            return Err(format!("response {} has no scores", self.responses[0].id));
        }
        for r in &self.responses {
            if !r.scores.keys().eq(keys.iter().copied()) {
                return Err(format!(
                    "response {} does not share the attribute set of prompt {}",
                    r.id, self.prompt_id
                ));
            }
            if let Some((a, v)) = r.scores.iter().find(|(_, v)| !v.is_finite()) {
                return Err(format!(
                    "response {} has non-finite score {v} for {a}",
                    r.id
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub instances: Vec<ScoredInstance>,
    /// Prompt ids dropped for having fewer than the requested number of responses.
    pub dropped: Vec<String>,
}

/// Parses a JSONL corpus, skipping blank lines.
pub fn parse_instances(reader: impl BufRead, min_responses: usize) -> Result<LoadedCorpus> {
    let mut instances = Vec::new();
    let mut dropped = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| IngestError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let inst: ScoredInstance =
            serde_json::from_value(value).map_err(|e| IngestError::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
        inst.check().map_err(|message| IngestError::Schema {
            line: line_no,
            message,
        })?;
        if inst.responses.len() < min_responses {
            dropped.push(inst.prompt_id);
        } else {
            instances.push(inst);
        }
    }
    if !dropped.is_empty() {
        log::info!(
            "dropped {} prompts with fewer than {min_responses} responses",
            dropped.len()
        );
    }
    Ok(LoadedCorpus { instances, dropped })
}

pub fn load_instances(path: &Path, min_responses: usize) -> Result<LoadedCorpus> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instances(std::io::BufReader::new(file), min_responses)
}

/// SplitMix64 finalizer applied to `base + (index+1)·γ`; a bijection in `base` for fixed `index`.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltMatrix {
    pub prompt_id: String,
    pub response_ids: Vec<String>,
    /// Attribute drawn for each pair `i < j`, in lexicographic pair order.
    pub attributes: Vec<String>,
    pub matrix: PreferenceMatrix,
}

/// Subsamples `k` responses, then draws one attribute per pair and sets `P_ij = σ(s_i − s_j)`.
pub fn build_preference(instance: &ScoredInstance, k: usize, seed: u64) -> Result<BuiltMatrix> {
    let n = instance.responses.len();
    if n < k {
        return Err(IngestError::TooFewResponses {
            prompt_id: instance.prompt_id.clone(),
            have: n,
            need: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    let picked: Vec<&ScoredResponse> = chosen.iter().map(|&i| &instance.responses[i]).collect();
    let attrs = instance.attributes();
    let mut drawn = Vec::with_capacity(k * (k - 1) / 2);
    let mut upper = vec![0.5; k * k];
    for i in 0..k {
        for j in (i + 1)..k {
            let a = attrs[rng.random_range(0..attrs.len())];
            let gap = picked[i].scores[a] - picked[j].scores[a];
            if gap.abs() > LARGE_SCORE_GAP {
                log::warn!(
                    "prompt {}: score gap {gap} on {a} saturates the sigmoid",
                    instance.prompt_id
                );
            }
            upper[i * k + j] = sigmoid(gap);
            drawn.push(a.to_string());
        }
    }
    let matrix = PreferenceMatrix::from_upper(k, |i, j| upper[i * k + j])?;
    Ok(BuiltMatrix {
        prompt_id: instance.prompt_id.clone(),
        response_ids: picked.iter().map(|r| r.id.clone()).collect(),
        attributes: drawn,
        matrix,
    })
}

/// Builds one matrix per instance with seed `mix_seed(seed, index)`.
pub fn build_corpus(
    instances: &[ScoredInstance],
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<BuiltMatrix>> {
    exec.map(instances, |idx, inst| {
        build_preference(inst, k, mix_seed(seed, idx as u64))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Comparisons per pair.
    pub n: u32,
    pub seed: u64,
}

/// Replaces each `P_ij` (`i < j`) by the success rate of `n` Bernoulli(`P_ij`) draws.
pub fn noisy_realization(
    p: &PreferenceMatrix,
    cfg: NoiseConfig,
) -> std::result::Result<PreferenceMatrix, ModelError> {
    if cfg.n == 0 {
        return Err(ModelError::ParameterOutOfRange {
            name: "n",
            value: 0.0,
        });
    }
    let k = p.k();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut upper = vec![0.5; k * k];
    for i in 0..k {
        for j in (i + 1)..k {
            let pij = p.get(i, j);
            let wins = (0..cfg.n).filter(|_| rng.random::<f64>() < pij).count();
            upper[i * k + j] = wins as f64 / cfg.n as f64;
        }
    }
    PreferenceMatrix::from_upper(k, |i, j| upper[i * k + j])
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusPartition {
    /// ST-or-stronger matrices by input index; ties show up in `tied_positions`.
    pub st: Vec<(usize, StructureReport)>,
    pub cyclic: Vec<(usize, StructureReport)>,
    pub excluded: Vec<(usize, String)>,
}

/// Splits matrices into ST, cyclic and excluded.
pub fn classify_corpus(matrices: &[PreferenceMatrix]) -> CorpusPartition {
    let mut out = CorpusPartition::default();
    for (idx, p) in matrices.iter().enumerate() {
        match classify(p) {
            Ok(r) if r.class.is_st() => out.st.push((idx, r)),
            Ok(r) if r.class == crate::structure::StructureClass::Cyclic => {
                out.cyclic.push((idx, r))
            }
            Ok(r) => out.excluded.push((
                idx,
                format!("{} but not strongly transitive", r.class.label()),
            )),
            Err(StructureError::Unclassifiable(_)) => out
                .excluded
                .push((idx, "neither cyclic nor transitive".into())),
            Err(e) => out.excluded.push((idx, e.to_string())),
        }
    }
    out
}

/// One entry of a matrix collection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub prompt_id: String,
    #[serde(default)]
    pub response_ids: Vec<String>,
    pub k: usize,
    pub p: Vec<Vec<f64>>,
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

impl MatrixRecord {
    pub fn from_matrix(prompt_id: String, response_ids: Vec<String>, p: &PreferenceMatrix) -> Self {
        let (class, order) = match classify(p) {
            Ok(r) => (r.class.label().to_string(), r.order),
            Err(StructureError::Unclassifiable(r)) => (r.class.label().to_string(), None),
            Err(_) => ("unclassified".to_string(), None),
        };
        MatrixRecord {
            prompt_id,
            response_ids,
            k: p.k(),
            p: p.to_rows(),
            class,
            order,
        }
    }

    pub fn matrix(&self) -> std::result::Result<PreferenceMatrix, ModelError> {
        if self.p.len() != self.k {
            return Err(ModelError::LengthMismatch {
                expected: self.k,
                got: self.p.len(),
            });
        }
        crate::model::validate_preference(&self.p)
    }
}

impl From<&BuiltMatrix> for MatrixRecord {
    fn from(b: &BuiltMatrix) -> Self {
        MatrixRecord::from_matrix(b.prompt_id.clone(), b.response_ids.clone(), &b.matrix)
    }
}
