//! Library surface of the runner: configuration loading, stage
//! orchestration, and grid export/import. The `multigame` binary is a
//! thin argument parser over these modules.

pub mod config;
pub mod export;
pub mod run;
