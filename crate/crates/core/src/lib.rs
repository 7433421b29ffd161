//! Simulation and analysis of common-mode electromagnetic signal injection
//! against differential links.
//!
//! * [`signal`] and [`sinad`]: differential pair, subtractor, spectral quality.
//! * [`receiver`]: clamp, equivalent DC offset, hysteresis latch, flip probabilities.
//! * [`attacker`]: guess model, case probabilities, optimal flip pair.
//! * [`campaign`]: Monte Carlo bit and message injection, bounds, pair comparison.
//! * [`can`]: CAN base frames and the attacker's radiation schedule.
//! * [`grid`], [`report`], [`cli`]: file formats and the command line.

pub mod attacker;
pub mod campaign;
pub mod can;
pub mod cli;
pub mod error;
pub mod grid;
pub mod profiles;
pub mod receiver;
pub mod report;
pub mod rng;
pub mod signal;
pub mod sinad;
pub mod stats;

pub use error::{Error, Result};
