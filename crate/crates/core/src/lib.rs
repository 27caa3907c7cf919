//! Simulator and agents for social continual object-oriented POMDPs:
//! worlds with hidden causal rules, a truthful oracle that charges for
//! answers, and a user who holds the goal.

pub mod actors;
pub mod agent;
pub mod domain;
pub mod env;
pub mod error;
pub mod harness;
pub mod knowledge;
pub mod planner;
pub mod refinement;
pub mod tasks;

pub use error::{Result, ScoopError};
