//! Run configuration: one flat key=value file drives every command.
//!
//! Keys are dotted section paths (`vae.latent_dim`, `train.seed`).
//! Lines starting with `#` and inline `# ...` tails are comments.
//! Parsing is strict: every key must appear exactly once, unknown
//! keys are rejected, and a parsed config always validates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use signpose_core::eval::TaeConfig;
use signpose_core::llm::LlmConfig;
use signpose_core::optim::{OptimConfig, TrainConfig};
use signpose_core::synth::SynthConfig;
use signpose_core::vae::VaeConfig;

use crate::error::{CliError, Result};

/// Where token embeddings come from when training the text encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderMode {
    /// Embedding table trained from random initialization.
    #[serde(rename = "scratch")]
    Scratch,
    /// Embedding table seeded from a pretrained vector file, then
    /// fine-tuned with the rest of the network.
    #[serde(rename = "embedding-file")]
    EmbeddingFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSection {
    pub joints: usize,
    pub dims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeSection {
    pub latent_dim: usize,
    pub hidden_dims: [usize; 3],
    pub lambda_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    /// 0 means "derive from the training corpus"; a positive value is
    /// asserted against the derived count.
    pub vocab_size: usize,
    pub regulator_layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub fixed_len: usize,
    pub feature_dim: usize,
    pub fps: usize,
    /// Frame-length bins `[lo, hi)` for the interval report.
    pub interval_bins: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateSection {
    pub use_distillation: bool,
    pub use_pose_loss: bool,
    pub encoder_mode: EncoderMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSection {
    pub n_records: usize,
    pub vocab_size: usize,
    pub tokens_min: usize,
    pub tokens_max: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub noise_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub skeleton: SkeletonSection,
    /// Longest producible sequence, shared by every module.
    pub t_max: usize,
    pub vae: VaeSection,
    pub llm: LlmSection,
    pub optim: OptimSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub ablate: AblateSection,
    pub synth: SynthSection,
}

/// Key=value lines keyed for strict single-use consumption.
struct KeyMap(BTreeMap<String, String>);

impl KeyMap {
    fn parse(text: &str) -> Result<KeyMap> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((head, _)) => head.trim(),
                None => raw.trim(),
            };
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {}: expected key = value, got {raw:?}", i + 1))
            })?;
            let key = key.trim().to_string();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::config(format!("duplicate key {key}")));
            }
        }
        Ok(KeyMap(map))
    }

    fn take(&mut self, key: &str) -> Result<String> {
        self.0
            .remove(key)
            .ok_or_else(|| CliError::config(format!("missing key {key}")))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<T> {
        let raw = self.take(key)?;
        raw.parse()
            .map_err(|_| CliError::config(format!("key {key}: expected {what}, got {raw:?}")))
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        self.parsed(key, "a non-negative integer")
    }

    fn u64(&mut self, key: &str) -> Result<u64> {
        self.parsed(key, "a non-negative integer")
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        self.parsed(key, "a number")
    }

    fn bool(&mut self, key: &str) -> Result<bool> {
        self.parsed(key, "true or false")
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.0.keys().next() {
            return Err(CliError::config(format!("unknown key {key}")));
        }
        Ok(())
    }
}

fn parse_hidden_dims(raw: &str) -> Result<[usize; 3]> {
    let dims: Vec<usize> = raw
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::config(format!("hidden_dims entry {p:?} is not an integer")))
        })
        .collect::<Result<_>>()?;
    dims.try_into()
        .map_err(|_| CliError::config("vae.hidden_dims needs exactly three widths"))
}

fn parse_bins(raw: &str) -> Result<Vec<(usize, usize)>> {
    raw.split(',')
        .map(|piece| {
            let piece = piece.trim();
            let (lo, hi) = piece
                .split_once('-')
                .ok_or_else(|| CliError::config(format!("bin {piece:?} is not lo-hi")))?;
            let lo = lo
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("bin edge {lo:?} is not an integer")))?;
            let hi = hi
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("bin edge {hi:?} is not an integer")))?;
            Ok((lo, hi))
        })
        .collect()
}

fn bins_text(bins: &[(usize, usize)]) -> String {
    bins.iter()
        .map(|(lo, hi)| format!("{lo}-{hi}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl EncoderMode {
    fn parse(raw: &str) -> Result<EncoderMode> {
        match raw {
            "scratch" => Ok(EncoderMode::Scratch),
            "embedding-file" => Ok(EncoderMode::EmbeddingFile),
            other => Err(CliError::config(format!(
                "encoder_mode must be scratch or embedding-file, got {other:?}"
            ))),
        }
    }

    fn text(self) -> &'static str {
        match self {
            EncoderMode::Scratch => "scratch",
            EncoderMode::EmbeddingFile => "embedding-file",
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut m = KeyMap::parse(text)?;
        let config = RunConfig {
            skeleton: SkeletonSection {
                joints: m.usize("skeleton.joints")?,
                dims: m.usize("skeleton.dims")?,
            },
            t_max: m.usize("t_max")?,
            vae: VaeSection {
                latent_dim: m.usize("vae.latent_dim")?,
                hidden_dims: parse_hidden_dims(&m.take("vae.hidden_dims")?)?,
                lambda_kl: m.f64("vae.lambda_kl")?,
            },
            llm: LlmSection {
                d_model: m.usize("llm.d_model")?,
                n_layers: m.usize("llm.n_layers")?,
                n_heads: m.usize("llm.n_heads")?,
                ffn_dim: m.usize("llm.ffn_dim")?,
                dropout: m.f64("llm.dropout")?,
                vocab_size: m.usize("llm.vocab_size")?,
                regulator_layers: m.usize("llm.regulator_layers")?,
            },
            optim: OptimSection {
                lr: m.f64("optim.lr")?,
                beta1: m.f64("optim.beta1")?,
                beta2: m.f64("optim.beta2")?,
                eps: m.f64("optim.eps")?,
                weight_decay: m.f64("optim.weight_decay")?,
            },
            train: TrainSection {
                epochs: m.usize("train.epochs")?,
                batch_size: m.usize("train.batch_size")?,
                seed: m.u64("train.seed")?,
            },
            eval: EvalSection {
                fixed_len: m.usize("eval.fixed_len")?,
                feature_dim: m.usize("eval.feature_dim")?,
                fps: m.usize("eval.fps")?,
                interval_bins: parse_bins(&m.take("eval.interval_bins")?)?,
            },
            ablate: AblateSection {
                use_distillation: m.bool("ablate.use_distillation")?,
                use_pose_loss: m.bool("ablate.use_pose_loss")?,
                encoder_mode: EncoderMode::parse(&m.take("ablate.encoder_mode")?)?,
            },
            synth: SynthSection {
                n_records: m.usize("synth.n_records")?,
                vocab_size: m.usize("synth.vocab_size")?,
                tokens_min: m.usize("synth.tokens_min")?,
                tokens_max: m.usize("synth.tokens_max")?,
                frames_min: m.usize("synth.frames_min")?,
                frames_max: m.usize("synth.frames_max")?,
                noise_scale: m.f64("synth.noise_scale")?,
            },
        };
        m.finish()?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(CliError::io(format!("reading config {}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line(&mut s, "skeleton.joints", self.skeleton.joints.to_string());
        line(&mut s, "skeleton.dims", self.skeleton.dims.to_string());
        line(&mut s, "t_max", self.t_max.to_string());
        s.push('\n');
        line(&mut s, "vae.latent_dim", self.vae.latent_dim.to_string());
        let [h1, h2, h3] = self.vae.hidden_dims;
        line(&mut s, "vae.hidden_dims", format!("{h1},{h2},{h3}"));
        line(&mut s, "vae.lambda_kl", self.vae.lambda_kl.to_string());
        s.push('\n');
        line(&mut s, "llm.d_model", self.llm.d_model.to_string());
        line(&mut s, "llm.n_layers", self.llm.n_layers.to_string());
        line(&mut s, "llm.n_heads", self.llm.n_heads.to_string());
        line(&mut s, "llm.ffn_dim", self.llm.ffn_dim.to_string());
        line(&mut s, "llm.dropout", self.llm.dropout.to_string());
        line(&mut s, "llm.vocab_size", self.llm.vocab_size.to_string());
        line(&mut s, "llm.regulator_layers", self.llm.regulator_layers.to_string());
        s.push('\n');
        line(&mut s, "optim.lr", self.optim.lr.to_string());
        line(&mut s, "optim.beta1", self.optim.beta1.to_string());
        line(&mut s, "optim.beta2", self.optim.beta2.to_string());
        line(&mut s, "optim.eps", self.optim.eps.to_string());
        line(&mut s, "optim.weight_decay", self.optim.weight_decay.to_string());
        s.push('\n');
        line(&mut s, "train.epochs", self.train.epochs.to_string());
        line(&mut s, "train.batch_size", self.train.batch_size.to_string());
        line(&mut s, "train.seed", self.train.seed.to_string());
        s.push('\n');
        line(&mut s, "eval.fixed_len", self.eval.fixed_len.to_string());
        line(&mut s, "eval.feature_dim", self.eval.feature_dim.to_string());
        line(&mut s, "eval.fps", self.eval.fps.to_string());
        line(&mut s, "eval.interval_bins", bins_text(&self.eval.interval_bins));
        s.push('\n');
        line(&mut s, "ablate.use_distillation", self.ablate.use_distillation.to_string());
        line(&mut s, "ablate.use_pose_loss", self.ablate.use_pose_loss.to_string());
        line(&mut s, "ablate.encoder_mode", self.ablate.encoder_mode.text().to_string());
        s.push('\n');
        line(&mut s, "synth.n_records", self.synth.n_records.to_string());
        line(&mut s, "synth.vocab_size", self.synth.vocab_size.to_string());
        line(&mut s, "synth.tokens_min", self.synth.tokens_min.to_string());
        line(&mut s, "synth.tokens_max", self.synth.tokens_max.to_string());
        line(&mut s, "synth.frames_min", self.synth.frames_min.to_string());
        line(&mut s, "synth.frames_max", self.synth.frames_max.to_string());
        line(&mut s, "synth.noise_scale", self.synth.noise_scale.to_string());
        s
    }

    /// Cross-section consistency on top of the per-module validators.
    /// `vocab_size = 0` is allowed here (derived from data later).
    pub fn validate(&self) -> Result<()> {
        self.vae_config().validate()?;
        self.llm_config(self.llm.vocab_size.max(2))?.validate()?;
        self.tae_config().validate()?;
        self.train_config().validate()?;
        self.synth_config().validate()?;
        if self.eval.fps == 0 {
            return Err(CliError::config("eval.fps must be positive"));
        }
        if self.eval.interval_bins.is_empty() {
            return Err(CliError::config("eval.interval_bins must not be empty"));
        }
        for w in self.eval.interval_bins.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(CliError::config("eval.interval_bins must ascend without overlap"));
            }
        }
        for &(lo, hi) in &self.eval.interval_bins {
            if lo >= hi {
                return Err(CliError::config(format!("interval bin {lo}-{hi} is empty")));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.skeleton.joints * self.skeleton.dims
    }

    pub fn vae_config(&self) -> VaeConfig {
        VaeConfig {
            input_dim: self.width(),
            latent_dim: self.vae.latent_dim,
            hidden_dims: self.vae.hidden_dims,
            lambda_kl: self.vae.lambda_kl,
        }
    }

    /// `vocab_len` comes from the training corpus; a nonzero
    /// `llm.vocab_size` must agree with it.
    pub fn llm_config(&self, vocab_len: usize) -> Result<LlmConfig> {
        if self.llm.vocab_size != 0 && self.llm.vocab_size != vocab_len {
            return Err(CliError::config(format!(
                "llm.vocab_size is {} but the corpus vocabulary has {vocab_len} entries",
                self.llm.vocab_size
            )));
        }
        Ok(LlmConfig {
            d_model: self.llm.d_model,
            n_layers: self.llm.n_layers,
            n_heads: self.llm.n_heads,
            ffn_dim: self.llm.ffn_dim,
            dropout: self.llm.dropout,
            t_max: self.t_max,
            vocab_size: vocab_len,
            latent_dim: self.vae.latent_dim,
            regulator_layers: self.llm.regulator_layers,
            use_distillation: self.ablate.use_distillation,
            use_pose_loss: self.ablate.use_pose_loss,
        })
    }

    /// The feature autoencoder reuses the sequence-model transformer
    /// dims; only window length and feature width are its own.
    pub fn tae_config(&self) -> TaeConfig {
        TaeConfig {
            input_dim: self.width(),
            d_model: self.llm.d_model,
            n_layers: self.llm.n_layers,
            n_heads: self.llm.n_heads,
            ffn_dim: self.llm.ffn_dim,
            dropout: self.llm.dropout,
            fixed_len: self.eval.fixed_len,
            feature_dim: self.eval.feature_dim,
        }
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            lr: self.optim.lr,
            beta1: self.optim.beta1,
            beta2: self.optim.beta2,
            eps: self.optim.eps,
            weight_decay: self.optim.weight_decay,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            optim: self.optim_config(),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            vocab_size: self.synth.vocab_size,
            tokens_min: self.synth.tokens_min,
            tokens_max: self.synth.tokens_max,
            frames_min: self.synth.frames_min,
            frames_max: self.synth.frames_max,
            t_max: self.t_max,
            noise_scale: self.synth.noise_scale,
            j_joints: self.skeleton.joints,
            k_dims: self.skeleton.dims,
            seed: self.train.seed,
        }
    }

    /// Desk-scale preset: minutes of CPU instead of GPU-days. The low
    /// fps widens the one-second duration tolerance to a band that is
    /// neither trivially satisfied nor unreachable at t_max 48.
    pub fn toy() -> RunConfig {
        RunConfig {
            skeleton: SkeletonSection { joints: 8, dims: 2 },
            t_max: 48,
            vae: VaeSection {
                latent_dim: 16,
                hidden_dims: [64, 48, 32],
                lambda_kl: 1e-4,
            },
            llm: LlmSection {
                d_model: 64,
                n_layers: 2,
                n_heads: 2,
                ffn_dim: 128,
                dropout: 0.1,
                vocab_size: 0,
                regulator_layers: 2,
            },
            optim: OptimSection {
                // Small models on easy data train an order of magnitude
                // hotter than the full-scale recipe tolerates.
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: 0.01,
            },
            train: TrainSection {
                epochs: 40,
                batch_size: 16,
                seed: 7,
            },
            eval: EvalSection {
                fixed_len: 16,
                feature_dim: 24,
                fps: 6,
                interval_bins: vec![(0, 12), (12, 24), (24, 36), (36, 48)],
            },
            ablate: AblateSection {
                use_distillation: true,
                use_pose_loss: true,
                encoder_mode: EncoderMode::Scratch,
            },
            synth: SynthSection {
                // Sized so the hash split leaves ~40 test records: enough
                // windows for stable distance estimates and fine enough
                // duration-accuracy granularity to separate ablations.
                n_records: 400,
                vocab_size: 24,
                tokens_min: 1,
                tokens_max: 4,
                frames_min: 4,
                frames_max: 12,
                noise_scale: 0.02,
            },
        }
    }

    /// Published training recipe. Skeleton, sequence bounds, and
    /// feature width are chosen to match the reported data scale; the
    /// synthetic-corpus section stands in for the real dataset.
    pub fn paper() -> RunConfig {
        RunConfig {
            skeleton: SkeletonSection { joints: 50, dims: 3 },
            t_max: 200,
            vae: VaeSection {
                latent_dim: 64,
                hidden_dims: [512, 384, 256],
                lambda_kl: 1e-4,
            },
            llm: LlmSection {
                d_model: 768,
                n_layers: 8,
                n_heads: 8,
                ffn_dim: 2048,
                dropout: 0.1,
                vocab_size: 0,
                regulator_layers: 2,
            },
            optim: OptimSection {
                lr: 2e-4,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: 0.01,
            },
            train: TrainSection {
                epochs: 500,
                batch_size: 40,
                seed: 7,
            },
            eval: EvalSection {
                fixed_len: 34,
                feature_dim: 256,
                fps: 25,
                interval_bins: vec![(0, 50), (50, 100), (100, 150), (150, 200)],
            },
            ablate: AblateSection {
                use_distillation: true,
                use_pose_loss: true,
                encoder_mode: EncoderMode::Scratch,
            },
            synth: SynthSection {
                n_records: 7096,
                vocab_size: 2887,
                tokens_min: 2,
                tokens_max: 16,
                frames_min: 8,
                frames_max: 12,
                noise_scale: 0.02,
            },
        }
    }
}
