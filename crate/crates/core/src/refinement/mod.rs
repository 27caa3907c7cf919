//! Choosing how to refine causal knowledge: ask the oracle, intervene, or
//! leave it alone.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actors::OracleQuery;
use crate::domain::{Edge, Goal, ProblemInstance};
use crate::env::AgentAction;
use crate::error::{Result, ScoopError};
use crate::knowledge::{
    entropy, entropy_of, outcome_distribution, values_from_readings, CausalGraph, HypothesisPosterior,
};
use crate::planner::{extract_plan, induce_mdp, value_iterate, PlanMode, PlannerConfig};

/// Gains closer than this are ties, resolved by edge or action order.
pub const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoiMode {
    /// Expected posterior-entropy reduction in bits, compared against costs
    /// exactly as the refinement branch states.
    #[default]
    Entropy,
    /// Expected improvement of the planned value, and a gain-aware
    /// intervene/ask comparison.
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Magnitude of an oracle query's cost, as the agent prices it.
    pub oracle_cost: f64,
    /// Allowance spent on refinement while no user goal is known.
    pub budget: f64,
    pub gain_threshold: f64,
    /// Reasoner iterations per episode.
    pub max_steps: u32,
    /// Lookahead of the VoI computation; only 1 is implemented.
    pub voi_horizon: u32,
    /// Added to |r^a| when pricing an intervention.
    pub opportunity_cost: f64,
    pub voi_mode: VoiMode,
    pub plan_mode: PlanMode,
    /// Plan steps executed per subroutine call.
    pub plan_steps_per_call: u32,
    pub state_cap: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            oracle_cost: 0.5,
            budget: 0.0,
            gain_threshold: 0.01,
            max_steps: 40,
            voi_horizon: 1,
            opportunity_cost: 0.0,
            voi_mode: VoiMode::Entropy,
            plan_mode: PlanMode::Expected,
            plan_steps_per_call: 1,
            state_cap: crate::planner::DEFAULT_STATE_CAP,
        }
    }
}

impl AgentConfig {
    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            mode: self.plan_mode,
            state_cap: self.state_cap,
            ..PlannerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionOption {
    pub action: AgentAction,
    pub cost: f64,
    pub expected_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementProposal {
    pub target_edges: Vec<Edge>,
    pub gain: f64,
    pub best_query: Option<OracleQuery>,
    pub best_intervention: Option<InterventionOption>,
}

impl RefinementProposal {
    pub fn is_empty(&self) -> bool {
        self.target_edges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chosen", rename_all = "snake_case")]
pub enum RefinementDecision {
    Intervene { action: AgentAction },
    AskOracle { query: OracleQuery },
    NoRefinement,
}

/// Expected entropy left after seeing an outcome, given per-hypothesis
/// outcome distributions.
fn expected_entropy_after<K: Ord + Clone>(
    posterior: &HypothesisPosterior,
    outcomes: &[BTreeMap<K, f64>],
) -> f64 {
    let mut joint: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    let n = posterior.len();
    for (i, dist) in outcomes.iter().enumerate() {
        for (k, p) in dist {
            joint.entry(k.clone()).or_insert_with(|| vec![0.0; n])[i] += posterior.probs[i] * p;
        }
    }
    joint
        .values()
        .map(|masses| {
            let pk: f64 = masses.iter().sum();
            if pk > 0.0 {
                pk * entropy_of(masses)
            } else {
                0.0
            }
        })
        .sum()
}

/// Per-hypothesis answer of a truthful oracle to an edge query: `None` for
/// does-not-cause, else the edge probability bits.
fn edge_answers(
    posterior: &HypothesisPosterior,
    edge: &Edge,
    instance: &ProblemInstance,
) -> Result<Vec<BTreeMap<Option<u64>, f64>>> {
    let dm = &instance.domain_model;
    posterior
        .support
        .iter()
        .map(|h| {
            let i = dm
                .hypothesis_idx(h)
                .ok_or_else(|| ScoopError::UnknownHypothesis(h.clone()))?;
            let key = dm.edge_probability(i, edge).map(f64::to_bits);
            Ok(BTreeMap::from([(key, 1.0)]))
        })
        .collect()
}

/// Expected entropy reduction (bits) of asking the oracle about `edge`.
pub fn edge_query_gain(
    posterior: &HypothesisPosterior,
    edge: &Edge,
    instance: &ProblemInstance,
) -> Result<f64> {
    let answers = edge_answers(posterior, edge, instance)?;
    Ok((entropy(posterior) - expected_entropy_after(posterior, &answers)).max(0.0))
}

/// Expected entropy reduction of executing `action` from the observed
/// readings.
pub fn intervention_gain(
    posterior: &HypothesisPosterior,
    readings: &BTreeMap<String, String>,
    action: usize,
    instance: &ProblemInstance,
) -> Result<f64> {
    let model = &instance.model;
    let pre = values_from_readings(model, readings);
    let outcomes = posterior
        .support
        .iter()
        .map(|h| {
            let i = model
                .hypothesis_idx(h)
                .ok_or_else(|| ScoopError::UnknownHypothesis(h.clone()))?;
            outcome_distribution(model, &pre, &[Some(action)], i)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((entropy(posterior) - expected_entropy_after(posterior, &outcomes)).max(0.0))
}

/// Planned value under a posterior, from the observed readings.
fn planned_value(
    posterior: &HypothesisPosterior,
    readings: &BTreeMap<String, String>,
    goal: &Goal,
    instance: &ProblemInstance,
    config: &AgentConfig,
    steps_left: u32,
) -> Result<f64> {
    let start = values_from_readings(&instance.model, readings);
    let mdp = induce_mdp(posterior, &start, goal, instance, &config.planner(), steps_left)?;
    let vf = value_iterate(&mdp, config.planner().tolerance)?;
    Ok(extract_plan(&mdp, &vf, 0, Some(instance)).expected_value)
}

fn value_gain_of_partition<K: Ord + Clone>(
    posterior: &HypothesisPosterior,
    outcomes: &[BTreeMap<K, f64>],
    base: f64,
    value_of: &dyn Fn(&HypothesisPosterior) -> Result<f64>,
) -> Result<f64> {
    let mut joint: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (i, dist) in outcomes.iter().enumerate() {
        for (k, p) in dist {
            joint
                .entry(k.clone())
                .or_insert_with(|| vec![0.0; posterior.len()])[i] += p;
        }
    }
    let mut expected = 0.0;
    for likelihoods in joint.values() {
        let pk: f64 = likelihoods.iter().zip(&posterior.probs).map(|(l, p)| l * p).sum();
        if pk > 0.0 {
            expected += pk * value_of(&posterior.reweight(likelihoods)?)?;
        }
    }
    Ok((expected - base).max(0.0))
}

/// Context the refinement step needs besides the posterior.
pub struct RefinementContext<'a> {
    pub instance: &'a ProblemInstance,
    pub readings: &'a BTreeMap<String, String>,
    /// Known user goal; value-mode VoI needs one.
    pub goal: Option<&'a Goal>,
    pub steps_left: u32,
}

/// Scores an edge query for every unknown edge of `graph` and keeps the
/// best, ties going to the first edge in order. Also prices the best
/// intervention.
pub fn estimate_refinement(
    posterior: &HypothesisPosterior,
    graph: &CausalGraph,
    ctx: &RefinementContext<'_>,
    config: &AgentConfig,
) -> Result<RefinementProposal> {
    let target_edges: Vec<Edge> = graph.unknown_edges().map(|(e, _)| e.clone()).collect();
    if target_edges.is_empty() {
        return Ok(RefinementProposal {
            target_edges,
            gain: 0.0,
            best_query: None,
            best_intervention: None,
        });
    }
    let value_ctx = match (config.voi_mode, ctx.goal) {
        (VoiMode::Value, Some(goal)) => Some((
            goal,
            planned_value(
                posterior,
                ctx.readings,
                goal,
                ctx.instance,
                config,
                ctx.steps_left,
            )?,
        )),
        _ => None,
    };
    let scores = target_edges
        .par_iter()
        .map(|e| match value_ctx {
            None => edge_query_gain(posterior, e, ctx.instance),
            Some((goal, base)) => {
                let answers = edge_answers(posterior, e, ctx.instance)?;
                value_gain_of_partition(posterior, &answers, base, &|p| {
                    planned_value(p, ctx.readings, goal, ctx.instance, config, ctx.steps_left)
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, g) in scores.iter().enumerate() {
        if *g > scores[best] + GAIN_TIE {
            best = i;
        }
    }
    let mut proposal = RefinementProposal {
        gain: scores[best],
        best_query: Some(OracleQuery::edge(&target_edges[best])),
        target_edges,
        best_intervention: None,
    };
    proposal.best_intervention = estimate_intervention_cost(&proposal, posterior, ctx, config)?;
    Ok(proposal)
}

/// The most informative single action and its price |r^a| plus the
/// opportunity term. `None` when no action tells hypotheses apart.
pub fn estimate_intervention_cost(
    proposal: &RefinementProposal,
    posterior: &HypothesisPosterior,
    ctx: &RefinementContext<'_>,
    config: &AgentConfig,
) -> Result<Option<InterventionOption>> {
    if proposal.is_empty() {
        return Ok(None);
    }
    let instance = ctx.instance;
    let model = &instance.model;
    let value_ctx = match (config.voi_mode, ctx.goal) {
        (VoiMode::Value, Some(goal)) => Some((
            goal,
            planned_value(posterior, ctx.readings, goal, instance, config, ctx.steps_left)?,
        )),
        _ => None,
    };
    let gains = (0..model.actions.len())
        .into_par_iter()
        .map(|a| -> Result<(f64, f64)> {
            let bits = intervention_gain(posterior, ctx.readings, a, instance)?;
            let score = match value_ctx {
                Some((goal, base)) if bits > GAIN_TIE => {
                    let pre = values_from_readings(model, ctx.readings);
                    let outcomes = posterior
                        .support
                        .iter()
                        .map(|h| {
                            let i = model.hypothesis_idx(h).expect("support is grounded");
                            outcome_distribution(model, &pre, &[Some(a)], i)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    value_gain_of_partition(posterior, &outcomes, base, &|p| {
                        planned_value(p, ctx.readings, goal, instance, config, ctx.steps_left)
                    })?
                }
                _ => bits,
            };
            Ok((bits, score))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let mut best: Option<usize> = None;
    for (a, (bits, score)) in gains.iter().enumerate() {
        if *bits <= GAIN_TIE {
            continue;
        }
        if best.is_none_or(|b| *score > gains[b].1 + GAIN_TIE) {
            best = Some(a);
        }
    }
    Ok(best.map(|a| InterventionOption {
        action: AgentAction::env(model.actions[a].term.clone()),
        cost: model.actions[a].cost.abs() + config.opportunity_cost,
        expected_gain: gains[a].1,
    }))
}

/// The refinement branch: no refinement unless the gain is significant;
/// intervene when an option exists and is cheaper than the oracle;
/// otherwise ask.
pub fn select_refinement(
    proposal: &RefinementProposal,
    option: Option<&InterventionOption>,
    config: &AgentConfig,
) -> RefinementDecision {
    if proposal.gain <= config.gain_threshold {
        return RefinementDecision::NoRefinement;
    }
    let intervene = match (config.voi_mode, option) {
        (_, None) => false,
        (VoiMode::Entropy, Some(o)) => o.cost < config.oracle_cost,
        (VoiMode::Value, Some(o)) => o.expected_gain - o.cost > proposal.gain - config.oracle_cost,
    };
    if intervene {
        let o = option.expect("checked above");
        return RefinementDecision::Intervene {
            action: o.action.clone(),
        };
    }
    match &proposal.best_query {
        Some(q) => RefinementDecision::AskOracle { query: q.clone() },
        None => RefinementDecision::NoRefinement,
    }
}

pub fn formulate_query(proposal: &RefinementProposal) -> Result<OracleQuery> {
    proposal.best_query.clone().ok_or(ScoopError::EmptyProposal)
}
