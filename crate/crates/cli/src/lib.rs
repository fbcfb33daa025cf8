//! Experiment orchestration for the fbflow solvers: configuration parsing
//! with flag overrides, subcommand execution and reproducible run
//! manifests. The binary in this crate is a thin wrapper over [`commands`].

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{execute, RunError};
pub use config::RunConfig;
pub use manifest::RunManifest;
