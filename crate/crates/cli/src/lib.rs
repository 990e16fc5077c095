//! File formats, run configuration and experiment drivers behind the `mvmot` binary.

pub mod config;
pub mod experiments;
pub mod formats;
pub mod report;
