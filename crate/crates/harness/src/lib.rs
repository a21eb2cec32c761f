//! Training, evaluation and probing on top of `asn-core`: config files,
//! metrics CSVs, checkpoints and the `asn` command line.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod metrics;
