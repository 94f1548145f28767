//! Command-line driver for the BCGP emulator: run configuration, data and
//! artifact formats, and the fit / predict / decompose / benchmark
//! pipelines.

pub mod config;
pub mod io;
pub mod run;

pub use config::RunConfig;
