//! Corpus files: JSON-lines records, deterministic hash splits, and
//! the token/pose views the trainers consume.
//!
//! One line per record: `{"id", "tokens", "frames"[, "predicted_len"]}`
//! with frames as row-major `[T][J*K]` coordinates. The format is the
//! interchange for every command, including generated output.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signpose_core::pose::{CorpusRecord, NormalizationParams, PoseFrame, PoseSequence};
use signpose_core::vocab::Vocab;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub id: String,
    pub tokens: Vec<String>,
    pub frames: Vec<Vec<f64>>,
    /// Present only on generated records: the regulated length, which
    /// always equals `frames.len()`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_len: Option<usize>,
}

impl RecordJson {
    pub fn from_record(record: &CorpusRecord) -> RecordJson {
        RecordJson {
            id: record.id.clone(),
            tokens: record.tokens.clone(),
            frames: record.poses.frames().iter().map(|f| f.coords.clone()).collect(),
            predicted_len: None,
        }
    }

    pub fn to_record(&self) -> Result<CorpusRecord> {
        let frames = self.frames.iter().map(|c| PoseFrame::new(c.clone())).collect();
        let poses = PoseSequence::new(frames)
            .map_err(|e| CliError::config(format!("record {}: {e}", self.id)))?;
        Ok(CorpusRecord {
            id: self.id.clone(),
            tokens: self.tokens.clone(),
            poses,
        })
    }
}

pub fn save_jsonl(path: &Path, records: &[RecordJson]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(CliError::json(format!("encoding record {}", record.id)))?;
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn load_jsonl(path: &Path) -> Result<Vec<RecordJson>> {
    let text = fs::read_to_string(path)
        .map_err(CliError::io(format!("reading corpus {}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RecordJson = serde_json::from_str(line)
            .map_err(CliError::json(format!("{} line {}", path.display(), i + 1)))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::config(format!("corpus {} has no records", path.display())));
    }
    Ok(records)
}

/// Loads and converts, enforcing one pose width across the file.
pub fn load_records(path: &Path, width: usize) -> Result<Vec<CorpusRecord>> {
    let records: Vec<CorpusRecord> = load_jsonl(path)?
        .iter()
        .map(RecordJson::to_record)
        .collect::<Result<_>>()?;
    for record in &records {
        if record.poses.width() != width {
            return Err(CliError::config(format!(
                "record {}: pose width {} does not match skeleton width {width}",
                record.id,
                record.poses.width()
            )));
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// FNV-1a over the record id; stable across platforms and runs.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// 80/10/10 by id hash, so membership is a function of the id alone.
pub fn split_of(id: &str) -> Split {
    match fnv1a(id.as_bytes()) % 10 {
        0..=7 => Split::Train,
        8 => Split::Dev,
        _ => Split::Test,
    }
}

pub fn split_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{split}.jsonl"))
}

/// Writes `train/dev/test.jsonl` plus matching `.txt` token files
/// (one space-joined sentence per line, feed for `generate`).
/// Returns the record count per split.
pub fn write_splits(dir: &Path, records: &[CorpusRecord]) -> Result<[usize; 3]> {
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let mut counts = [0usize; 3];
    for (i, split) in [Split::Train, Split::Dev, Split::Test].into_iter().enumerate() {
        let members: Vec<RecordJson> = records
            .iter()
            .filter(|r| split_of(&r.id) == split)
            .map(RecordJson::from_record)
            .collect();
        counts[i] = members.len();
        if members.is_empty() {
            return Err(CliError::config(format!(
                "split {split} is empty; need more records for a usable corpus"
            )));
        }
        save_jsonl(&split_path(dir, split), &members)?;

        let sentences: String = members
            .iter()
            .map(|r| r.tokens.join(" ") + "\n")
            .collect();
        let txt = dir.join(format!("{split}.txt"));
        fs::write(&txt, sentences).map_err(CliError::io(format!("writing {}", txt.display())))?;
    }
    Ok(counts)
}

/// Ids must be split-disjoint and globally unique.
pub fn check_disjoint(dir: &Path) -> Result<()> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        for record in load_jsonl(&split_path(dir, split))? {
            if !seen.insert(record.id.clone()) {
                return Err(CliError::config(format!("id {} appears twice", record.id)));
            }
        }
    }
    Ok(())
}

pub fn build_vocab(records: &[CorpusRecord]) -> Vocab {
    Vocab::build(
        records
            .iter()
            .flat_map(|r| r.tokens.iter())
            .map(String::as_str),
    )
}

pub fn normalized_sequences(
    records: &[CorpusRecord],
    norm: &NormalizationParams,
) -> Result<Vec<PoseSequence>> {
    records
        .iter()
        .map(|r| norm.normalize_sequence(&r.poses).map_err(CliError::Core))
        .collect()
}
