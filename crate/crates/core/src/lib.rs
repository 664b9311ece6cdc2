//! Analytical simulator and dataflow compiler for a silicon-photonic
//! diffusion-model accelerator.
//!
//! A [`WorkloadGraph`] is compiled against an [`ArchConfig`] into a
//! [`Schedule`] of bank passes and ECU events, which [`aggregate`] turns into
//! a [`CostReport`]. Every schedule can be replayed on real operands and
//! checked against the reference execution in [`model`].

pub mod arch;
pub mod config;
pub mod cost;
pub mod devices;
pub mod dse;
pub mod error;
pub mod model;
pub mod numerics;
pub mod platform;
pub mod scheduler;
pub mod workload;

pub use arch::ArchConfig;
pub use config::ConfigFile;
pub use cost::{ablation, aggregate, evaluate_design, CostReport, EnergyBreakdown};
pub use dse::{explore, DseResult, DseSpace};
pub use error::{Error, Result};
pub use numerics::Tensor;
pub use platform::Platform;
pub use scheduler::{compile, Optimizations, Schedule};
pub use workload::{load_workload, load_workload_file, preset, WorkloadGraph, PRESET_NAMES};
