//! Config-driven experiment runner behind the `mfg` binary.

pub mod config;
pub mod experiment;
pub mod output;
pub mod scenario;
