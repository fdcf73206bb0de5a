//! Core library for non-autoregressive text-to-pose generation.
//!
//! The pipeline has three trained networks and one evaluation network:
//!
//! - a per-frame pose [VAE](vae) whose encoder and decoder double as the
//!   distillation teacher and the pose generator,
//! - a [latent learning module](llm): a transformer text encoder with a
//!   CLS pooling token, a sigmoid length regulator, and a NAR decoder
//!   that emits a latent sequence in one parallel pass,
//! - a fixed-length sequence autoencoder ([eval::TaeBundle]) whose
//!   encoder features feed the Frechet gesture distance.
//!
//! Everything here is `no_std` + `alloc`: pure, seed-deterministic
//! numerics with no IO. File formats, checkpoints, and the command-line
//! driver live in the companion `signpose-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod linalg;
pub mod llm;
pub mod nn;
pub mod optim;
pub mod pose;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod vae;
pub mod vocab;

pub use error::{CoreError, Result};
pub use tensor::Tensor;
