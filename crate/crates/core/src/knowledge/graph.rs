use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::domain::{Edge, GroundModel, MechanismTemplate, ProblemInstance};
use crate::error::Result;

use super::posterior::{Evidence, HypothesisPosterior};

/// Marginals within this distance of 0 or 1 count as settled.
pub const STATUS_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStatus {
    Confirmed,
    Refuted,
    Unknown,
}

impl EdgeStatus {
    pub fn from_marginal(m: f64) -> Self {
        if m >= 1.0 - STATUS_EPSILON {
            EdgeStatus::Confirmed
        } else if m <= STATUS_EPSILON {
            EdgeStatus::Refuted
        } else {
            EdgeStatus::Unknown
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeBelief {
    pub status: EdgeStatus,
    pub marginal: f64,
}

/// Ground causal events and the edges any hypothesis proposes among them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<Edge, EdgeBelief>,
}

impl CausalGraph {
    pub fn unknown_edges(&self) -> impl Iterator<Item = (&Edge, &EdgeBelief)> {
        self.edges.iter().filter(|(_, b)| b.status == EdgeStatus::Unknown)
    }

    pub fn status(&self, edge: &Edge) -> Option<EdgeStatus> {
        self.edges.get(edge).map(|b| b.status)
    }

    /// Edges whose status differs from `before`, with the new belief.
    pub fn changes_since(&self, before: &CausalGraph) -> Vec<(Edge, EdgeBelief)> {
        self.edges
            .iter()
            .filter(|(e, b)| before.edges.get(*e).is_none_or(|old| old.status != b.status))
            .map(|(e, b)| (e.clone(), *b))
            .collect()
    }
}

/// Edge marginals of the posterior over the edges of `model`.
pub fn derive_graph(posterior: &HypothesisPosterior, model: &GroundModel) -> CausalGraph {
    let mut marginals: BTreeMap<Edge, f64> = model.edges.iter().map(|e| (e.clone(), 0.0)).collect();
    for (h, p) in posterior.iter() {
        let Some(i) = model.hypothesis_idx(h) else {
            continue;
        };
        for e in model.hypotheses[i].edges.keys() {
            *marginals.get_mut(e).expect("hypothesis edges are model edges") += p;
        }
    }
    let mut nodes = BTreeSet::new();
    for e in marginals.keys() {
        nodes.insert(e.cause.clone());
        nodes.insert(e.effect.clone());
    }
    let edges = marginals
        .into_iter()
        .map(|(e, m)| {
            let m = m.clamp(0.0, 1.0);
            (
                e,
                EdgeBelief {
                    status: EdgeStatus::from_marginal(m),
                    marginal: m,
                },
            )
        })
        .collect();
    CausalGraph { nodes, edges }
}

/// The initial graph and posterior for an instance.
pub fn create_graph(instance: &ProblemInstance) -> Result<(CausalGraph, HypothesisPosterior)> {
    let posterior = HypothesisPosterior::prior(&instance.domain)?;
    Ok((derive_graph(&posterior, &instance.model), posterior))
}

fn template_regex(sentence: &str) -> Regex {
    let mut pattern = String::from("^");
    let mut rest = sentence;
    while let Some(open) = rest.find('{') {
        let close = match rest[open..].find('}') {
            Some(c) => open + c,
            None => break,
        };
        let slot = &rest[open + 1..close];
        pattern.push_str(&regex::escape(&rest[..open]));
        if slot.chars().all(|c| c.is_ascii_digit()) && !slot.is_empty() {
            pattern.push_str(&format!("(?P<s{slot}>.+?)"));
        } else {
            pattern.push_str(&regex::escape(&rest[open..=close]));
        }
        rest = &rest[close + 1..];
    }
    pattern.push_str(&regex::escape(rest));
    pattern.push('$');
    Regex::new(&pattern).expect("escaped template compiles")
}

fn match_template(
    t: &MechanismTemplate,
    sentence: &str,
    text: &str,
    instance: &ProblemInstance,
) -> Option<Vec<String>> {
    let re = template_regex(sentence);
    let caps = re.captures(text)?;
    let slots = crate::actors::slot_count(t);
    let mut args = Vec::with_capacity(slots);
    for i in 0..slots {
        let shown = caps.name(&format!("s{i}"))?.as_str();
        let object = instance
            .domain
            .objects
            .keys()
            .find(|o| instance.domain.display_name(o) == shown)?;
        args.push(object.clone());
    }
    Some(args)
}

/// Reads a language answer back through the template registry. Text that
/// fits no template yields `None`.
pub fn parse_description(text: &str, instance: &ProblemInstance) -> Option<Evidence> {
    let text = text.trim();
    for t in &instance.domain.templates {
        for (sentence, positive) in [(&t.positive, true), (&t.negative, false)] {
            if let Some(args) = match_template(t, sentence, text, instance) {
                return Some(Evidence::OracleDescription {
                    template: t.id.clone(),
                    args,
                    positive,
                });
            }
        }
    }
    tracing::warn!(text, "language answer matches no template");
    None
}
