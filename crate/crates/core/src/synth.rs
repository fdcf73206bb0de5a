//! Deterministic synthetic text-to-pose corpus.
//!
//! Each vocabulary token owns a sinusoidal joint trajectory; a record
//! is a random token sentence whose pose sequence concatenates the
//! per-token segments. The text fully determines the noise-free poses,
//! so the mapping is learnable by construction.

use alloc::string::String;
use alloc::vec::Vec;


// Resolves f64 math (exp, ln, sqrt, sin, powf) in pure-no_std
// builds. When any dependent links std, the identical inherent
// methods shadow the trait and this import appears unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::pose::{CorpusRecord, PoseFrame, PoseSequence, SkeletonSpec};
use crate::rng::{purpose, SeededRng};
use crate::tensor::Tensor;

/// Record streams are indexed by record number; the parameter tables
/// get this reserved stream index.
const TABLE_STREAM: u64 = 0xffff_ffff;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub vocab_size: usize,
    /// Tokens per record, inclusive range.
    pub tokens_min: usize,
    pub tokens_max: usize,
    /// Frames per token, inclusive range.
    pub frames_min: usize,
    pub frames_max: usize,
    /// Longest admissible sequence; worst-case records must fit.
    pub t_max: usize,
    pub noise_scale: f64,
    pub j_joints: usize,
    pub k_dims: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(CoreError::config("synth vocab_size must be >= 2"));
        }
        if self.tokens_min == 0 || self.tokens_min > self.tokens_max {
            return Err(CoreError::config("synth token range invalid"));
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return Err(CoreError::config("synth frame range invalid"));
        }
        if self.j_joints == 0 || self.k_dims == 0 {
            return Err(CoreError::config("synth skeleton dims invalid"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(CoreError::config("synth noise_scale must be >= 0"));
        }
        if self.tokens_max * self.frames_max > self.t_max {
            return Err(CoreError::config(alloc::format!(
                "longest possible record ({} tokens x {} frames) exceeds t_max {}",
                self.tokens_max,
                self.frames_max,
                self.t_max
            )));
        }
        Ok(())
    }

    pub fn skeleton(&self) -> Result<SkeletonSpec> {
        SkeletonSpec::generic(self.j_joints, self.k_dims)
    }
}

/// Per-token trajectory parameters, drawn once per seed.
#[derive(Debug, Clone)]
pub struct SynthTables {
    /// `[vocab_size x J*K]`, amplitudes in [0.1, 0.4].
    pub amplitude: Tensor,
    /// Angular step per frame, per token, in [0.2, 1.2].
    pub omega: Vec<f64>,
    /// `[vocab_size x J*K]`, phases in [0, 2pi).
    pub phase: Tensor,
}

pub fn synth_tables(cfg: &SynthConfig) -> SynthTables {
    let width = cfg.j_joints * cfg.k_dims;
    let mut rng = SeededRng::for_epoch(cfg.seed, purpose::SYNTH, TABLE_STREAM);
    let amplitude = Tensor::from_fn(cfg.vocab_size, width, |_, _| rng.uniform(0.1, 0.4));
    let omega = (0..cfg.vocab_size).map(|_| rng.uniform(0.2, 1.2)).collect();
    let tau = 2.0 * core::f64::consts::PI;
    let phase = Tensor::from_fn(cfg.vocab_size, width, |_, _| rng.uniform(0.0, tau));
    SynthTables {
        amplitude,
        omega,
        phase,
    }
}

/// Noise-free trajectory of one token over `n_frames` local steps:
/// `0.5 + A[token,c] * sin(omega[token]*t + phase[token,c])`.
pub fn token_segment(tables: &SynthTables, token: usize, n_frames: usize) -> Vec<PoseFrame> {
    let width = tables.amplitude.cols();
    (0..n_frames)
        .map(|t| {
            let coords = (0..width)
                .map(|c| {
                    let angle = tables.omega[token] * t as f64 + tables.phase.get(token, c);
                    0.5 + tables.amplitude.get(token, c) * angle.sin()
                })
                .collect();
            PoseFrame::new(coords)
        })
        .collect()
}

/// Spelled token name for index `i`; tokens sort in index order.
pub fn token_name(i: usize) -> String {
    alloc::format!("w{i:03}")
}

/// Generates `n_records` records. Each record draws from its own
/// derived stream, so the corpus is identical however records are
/// computed or parallelized.
pub fn synth_corpus(cfg: &SynthConfig, n_records: usize) -> Result<Vec<CorpusRecord>> {
    cfg.validate()?;
    if n_records == 0 {
        return Err(CoreError::config("synth needs n_records >= 1"));
    }
    if n_records as u64 >= TABLE_STREAM {
        return Err(CoreError::config("synth record count exceeds stream space"));
    }
    let tables = synth_tables(cfg);

    let mut records = Vec::with_capacity(n_records);
    for i in 0..n_records {
        let mut rng = SeededRng::for_epoch(cfg.seed, purpose::SYNTH, i as u64);
        let n_tokens = rng.int_in(cfg.tokens_min, cfg.tokens_max);
        let token_ids: Vec<usize> = (0..n_tokens).map(|_| rng.index(cfg.vocab_size)).collect();

        let mut frames: Vec<PoseFrame> = Vec::new();
        for &tok in &token_ids {
            let n_frames = rng.int_in(cfg.frames_min, cfg.frames_max);
            for mut frame in token_segment(&tables, tok, n_frames) {
                if cfg.noise_scale > 0.0 {
                    for v in &mut frame.coords {
                        *v += cfg.noise_scale * rng.normal();
                    }
                }
                for v in &mut frame.coords {
                    *v = v.clamp(0.0, 1.0);
                }
                frames.push(frame);
            }
        }

        records.push(CorpusRecord {
            id: alloc::format!("synth-{i:05}"),
            tokens: token_ids.iter().map(|&t| token_name(t)).collect(),
            poses: PoseSequence::new(frames)?,
        });
    }
    Ok(records)
}
