//! File formats and the command-line driver for `helprank-core`: JSONL
//! datasets, JSON checkpoints and configs, CSV reports, and the `gen`,
//! `train`, `eval`, `ablate`, `verify` and `routing` subcommands.

pub mod app;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod jsonl;
pub mod report;

pub use error::{AppError, AppResult};
