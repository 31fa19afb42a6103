//! Experiment harness, real-data multiverse analysis and file formats on
//! top of `netsmooth-core`.

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod multiverse;
pub mod report;

pub use netsmooth_core as core;
