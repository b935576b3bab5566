//! Minimum-time identification and stabilization of unknown discrete-time
//! linear systems from a single online trajectory.
//!
//! The pipeline is [`explorer::explore`] to collect data,
//! [`identify::pseudo_estimate`] to fit the least-norm consistent model, and
//! [`gain::synthesize`] to pick a stabilizing feedback. [`lti`] holds the
//! ground-truth plant and the oracles the other modules are checked against,
//! and [`pe`] the open-loop persistency-of-excitation baseline.

pub mod error;
pub mod experiment;
pub mod explorer;
pub mod gain;
pub mod identify;
pub mod lti;
pub mod matops;
pub mod pe;
pub mod rng;
mod vecser;

pub use error::{Error, Result};
pub use explorer::{explore, DataTriple, ExplorationReport, OnlineDataset};
pub use gain::{GainResult, RiccatiConfig};
pub use identify::{Estimate, PseudoEstimate};
pub use lti::{LtiSystem, NoiseSpec, SimulatedPlant, SystemKind};
pub use matops::{Matrix, Tolerance, Vector};
