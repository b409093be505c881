//! Cycle-level simulator of a tiled accelerator SoC on a multi-plane mesh
//! NoC, with receiver-initiated accelerator-to-accelerator transfers and a
//! dataflow runtime.
//!
//! The crate is organized bottom-up: [`noc`] moves flits, [`tiles`] models
//! the sockets, [`kernels`] holds the accelerator functions and their cost
//! model, [`soc`] runs the cycle loop, [`runtime`] validates dataflows and
//! drives accelerators, and [`experiment`] and [`report`] produce metrics.

pub mod config;
pub mod experiment;
pub mod kernels;
pub mod noc;
pub mod p2p;
pub mod report;
pub mod runtime;
pub mod soc;
pub mod tiles;

pub use config::{ConfigError, SocConfig};
pub use experiment::{run_experiment, Experiment, ExperimentError};
pub use report::RunReport;
pub use runtime::{DataflowGraph, Mode, Runtime, RuntimeError};
pub use soc::{Soc, SocError};
