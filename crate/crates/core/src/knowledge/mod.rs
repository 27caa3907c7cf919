//! What the agent believes about the hidden rules: an exact posterior over
//! rule-set hypotheses and the causal graph derived from it.

mod graph;
mod posterior;

pub use graph::{
    create_graph, derive_graph, parse_description, CausalGraph, EdgeBelief, EdgeStatus, STATUS_EPSILON,
};
pub use posterior::{
    entropy, entropy_of, likelihood, map_hypothesis, outcome_distribution, update, update_noisy,
    values_from_readings, Evidence, HypothesisPosterior, PosteriorSnapshot,
};
