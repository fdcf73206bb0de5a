//! Versioned JSON checkpoints.
//!
//! A checkpoint is self-describing: format version, the full run
//! configuration it was produced under, the training step reached,
//! the seed, and every parameter tensor by name. Floats are written
//! in shortest round-trip form, so save/load reproduces parameters
//! bit-exactly for all finite values (training rejects non-finite
//! parameters before they can reach a checkpoint).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use signpose_core::optim::ParamSet;
use signpose_core::pose::NormalizationParams;
use signpose_core::vocab::Vocab;
use signpose_core::Tensor;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Which network the parameter tensors belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CkptKind {
    #[serde(rename = "vae")]
    Vae,
    #[serde(rename = "llm")]
    Llm,
    #[serde(rename = "tae")]
    Tae,
}

impl fmt::Display for CkptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CkptKind::Vae => "vae",
            CkptKind::Llm => "llm",
            CkptKind::Tae => "tae",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Per-coordinate min/max of the fitting corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormData {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: CkptKind,
    pub config: RunConfig,
    /// Epochs completed when the checkpoint was written.
    pub step: usize,
    pub seed: u64,
    /// Present on vae and tae checkpoints: the pose normalization the
    /// parameters were trained under.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormData>,
    /// Present on llm checkpoints: token order defining embedding ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<String>>,
    pub params: BTreeMap<String, TensorData>,
}

impl Checkpoint {
    pub fn new(
        kind: CkptKind,
        config: &RunConfig,
        step: usize,
        seed: u64,
        params: &ParamSet,
    ) -> Checkpoint {
        let params = params
            .iter()
            .map(|(name, t)| {
                (
                    name.clone(),
                    TensorData {
                        rows: t.rows(),
                        cols: t.cols(),
                        data: t.values().to_vec(),
                    },
                )
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind,
            config: config.clone(),
            step,
            seed,
            norm: None,
            vocab: None,
            params,
        }
    }

    pub fn with_norm(mut self, norm: &NormalizationParams) -> Checkpoint {
        self.norm = Some(NormData {
            min: norm.min().to_vec(),
            max: norm.max().to_vec(),
        });
        self
    }

    pub fn with_vocab(mut self, vocab: &Vocab) -> Checkpoint {
        self.vocab = Some(vocab.tokens().to_vec());
        self
    }

    pub fn params(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        for (name, t) in &self.params {
            let tensor = Tensor::from_vec(t.rows, t.cols, t.data.clone())
                .map_err(|e| CliError::config(format!("checkpoint tensor {name}: {e}")))?;
            set.insert(name, tensor);
        }
        Ok(set)
    }

    pub fn norm(&self) -> Result<NormalizationParams> {
        let n = self
            .norm
            .as_ref()
            .ok_or_else(|| CliError::config("checkpoint carries no normalization"))?;
        NormalizationParams::new(n.min.clone(), n.max.clone()).map_err(CliError::Core)
    }

    pub fn vocab(&self) -> Result<Vocab> {
        let tokens = self
            .vocab
            .as_ref()
            .ok_or_else(|| CliError::config("checkpoint carries no vocabulary"))?;
        Vocab::from_tokens(tokens.clone()).map_err(CliError::Core)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string(self)
            .map_err(CliError::json(format!("encoding checkpoint {}", path.display())))?;
        json.push('\n');
        fs::write(path, json).map_err(CliError::io(format!("writing {}", path.display())))
    }

    /// A missing file is a usage error: every consumer of a checkpoint
    /// states a stage prerequisite.
    pub fn load(path: &Path, expected: CkptKind) -> Result<Checkpoint> {
        if !path.exists() {
            return Err(CliError::usage(format!(
                "{expected} checkpoint not found at {} (run the {expected} training stage first)",
                path.display()
            )));
        }
        let text = fs::read_to_string(path)
            .map_err(CliError::io(format!("reading checkpoint {}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(CliError::json(format!("decoding checkpoint {}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CliError::config(format!(
                "checkpoint {} has format version {}, this build reads {CHECKPOINT_VERSION}",
                path.display(),
                ckpt.version
            )));
        }
        if ckpt.kind != expected {
            return Err(CliError::usage(format!(
                "{} is a {} checkpoint, expected {expected}",
                path.display(),
                ckpt.kind
            )));
        }
        Ok(ckpt)
    }
}
