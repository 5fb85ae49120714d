//! File formats, dataset manifests, configuration, evaluation and the
//! command-line driver around `retromem-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod format;
pub mod fsutil;
pub mod manifest;
pub mod netpbm;
pub mod runlog;
pub mod threads;

pub use error::{Error, Result};
