//! Multi-region climate-economy simulator.
//!
//! Regions produce, trade, save and abate under a shared carbon cycle. An
//! optional negotiation stage lets regions bind each other to minimum
//! mitigation rates. Policies range from scripted constants to linear
//! policies trained with the cross-entropy method, and the experiment
//! harness compares negotiation against no negotiation across seeds and
//! across perturbed labor/technology configurations.

pub mod climate;
pub mod config;
pub mod econ;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod negotiation;
pub mod policy;
pub mod report;
pub mod rng;

pub use config::{Model, SimConfig};
pub use engine::{EpisodeLog, RunOptions, WorldState};
pub use error::{Error, Result};
pub use experiments::{ExperimentResult, ExperimentSettings};
pub use policy::{PolicyAssignment, PolicySpec};
