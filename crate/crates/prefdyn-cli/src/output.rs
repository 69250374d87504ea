//! Matrix-file loading and CSV/JSON writers.

use crate::Failure;
use anyhow::Context;
use prefdyn::ingest::MatrixRecord;
use prefdyn::model::PreferenceMatrix;
use serde::Serialize;
use std::path::Path;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Named {
    pub name: String,
    pub matrix: PreferenceMatrix,
}

/// Reads either a single `{"k", "p"}` matrix or a collection array.
pub fn load_matrices(path: &Path) -> Result<Vec<Named>, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Data)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", path.display()))
        .map_err(Failure::Data)?;
    if value.is_array() {
        let records: Vec<MatrixRecord> = serde_json::from_value(value)
            .with_context(|| format!("{} is not a matrix collection", path.display()))
            .map_err(Failure::Data)?;
        records
            .into_iter()
            .map(|r| {
                let matrix = r
                    .matrix()
                    .with_context(|| format!("matrix {}", r.prompt_id))
                    .map_err(Failure::Data)?;
                Ok(Named {
                    name: r.prompt_id,
                    matrix,
                })
            })
            .collect()
    } else {
        let matrix: PreferenceMatrix = serde_json::from_value(value)
            .with_context(|| format!("{} is not a preference matrix", path.display()))
            .map_err(Failure::Data)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(vec![Named { name, matrix }])
    }
}

pub fn pick(mut all: Vec<Named>, index: Option<usize>) -> Result<Named, Failure> {
    let i = index.unwrap_or(0);
    if i >= all.len() {
        return Err(Failure::Usage(format!(
            "--index {i} out of range for {} matrices",
            all.len()
        )));
    }
    Ok(all.swap_remove(i))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Data)
}

/// Pretty JSON to `path`, or to stdout.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::data)? + "\n";
    match path {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Data)?;
    w.write_record(header).map_err(Failure::data)?;
    for r in rows {
        w.write_record(&r).map_err(Failure::data)?;
    }
    w.flush().map_err(Failure::data)
}

pub fn show_vector(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(", ")
}
