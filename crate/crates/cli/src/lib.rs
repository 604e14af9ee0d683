//! Batch front end for the `nlmimo` simulator: configuration, experiment
//! commands, result files with provenance, and the throughput benchmark.

pub mod bench;
pub mod commands;
pub mod config;
pub mod manifest;

pub use config::RunConfig;
pub use manifest::RunManifest;
