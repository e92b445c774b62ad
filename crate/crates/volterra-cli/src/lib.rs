// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end for the Volterra branched-rough-path library.
//!
//! The binary (`volterra`) exposes eight subcommands — `coproduct`,
//! `enumerate`, `lift`, `chen-check`, `convergence`, `integrate`,
//! `solve`, and `verify-kernel` — each driven by a flat key-value config
//! file and writing its outputs (always including a `manifest.txt`) into
//! one directory.  Exit codes: `0` success, `2` invalid request, `3`
//! numerical diagnostic failure.
//!
//! This library crate holds everything the binary does so it can be
//! exercised directly by tests: config parsing ([`config`]), driver
//! construction ([`drivers`]), manifests ([`manifest`]), and the command
//! implementations ([`commands`]).

#![warn(missing_docs)]
#![warn(rust_2018_idioms)]

pub mod commands;
pub mod config;
pub mod drivers;
pub mod manifest;

pub use commands::{cmd_coproduct, run};
pub use config::ExperimentConfig;
