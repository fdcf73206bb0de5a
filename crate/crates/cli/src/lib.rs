//! File formats and orchestration around `signpose_core`.
//!
//! The binary (`signpose`) is a thin clap layer over this library:
//! integration tests drive the same command functions the binary
//! dispatches to, which is what makes "CLI output equals library
//! recomputation" a checkable property rather than a convention.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, Result};
