//! Pretrained token-embedding files.
//!
//! Format: one token per line, `token<TAB>v1 v2 ... v_d` with
//! whitespace-separated coordinates. Tokens absent from the file keep
//! their random initialization; file tokens outside the corpus
//! vocabulary are ignored (pretrained vocabularies are supersets).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use signpose_core::optim::ParamSet;
use signpose_core::vocab::Vocab;

use crate::error::{CliError, Result};

pub fn load_table(path: &Path, d_model: usize) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(CliError::io(format!("reading embeddings {}", path.display())))?;
    let mut table = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (token, rest) = line.split_once('\t').ok_or_else(|| {
            CliError::config(format!(
                "{} line {}: expected token<TAB>values",
                path.display(),
                i + 1
            ))
        })?;
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|v| {
                v.parse().map_err(|_| {
                    CliError::config(format!(
                        "{} line {}: {v:?} is not a number",
                        path.display(),
                        i + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != d_model {
            return Err(CliError::config(format!(
                "{} line {}: {} values, the model needs {d_model}",
                path.display(),
                i + 1,
                values.len()
            )));
        }
        if table.insert(token.to_string(), values).is_some() {
            return Err(CliError::config(format!(
                "{} line {}: token {token:?} appears twice",
                path.display(),
                i + 1
            )));
        }
    }
    if table.is_empty() {
        return Err(CliError::config(format!("{} has no embeddings", path.display())));
    }
    Ok(table)
}

/// Overwrites rows of `embed.tok` for vocabulary tokens present in
/// the table; returns how many rows were seeded.
pub fn seed_embeddings(
    params: &mut ParamSet,
    vocab: &Vocab,
    table: &BTreeMap<String, Vec<f64>>,
) -> Result<usize> {
    let embed = params.get_mut("embed.tok").map_err(CliError::Core)?;
    let mut seeded = 0;
    for (id, token) in vocab.tokens().iter().enumerate() {
        if let Some(values) = table.get(token) {
            embed.row_mut(id).copy_from_slice(values);
            seeded += 1;
        }
    }
    Ok(seeded)
}
