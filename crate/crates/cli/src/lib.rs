//! Batch driver for simulating and analysing negativity-estimation
//! campaigns. The binary `qcrb` is a thin wrapper over [`commands`].

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use error::CliError;
