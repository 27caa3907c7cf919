//! Planning on the induced MDP: reachable states under the believed rules,
//! value iteration, and greedy plan extraction.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::domain::{Goal, ProblemInstance};
use crate::env::dynamics::transition_distribution;
use crate::env::AgentAction;
use crate::error::{Result, ScoopError};
use crate::knowledge::{map_hypothesis, HypothesisPosterior};

pub const DEFAULT_STATE_CAP: usize = 100_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Q-values closer than this are ties, resolved by action order.
pub const TIE_EPSILON: f64 = 1e-9;
const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Transitions of the most probable hypothesis only.
    Map,
    /// Transitions mixed by posterior weight.
    #[default]
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// A finite MDP. State 0 is the start state; actions are in label order.
#[derive(Debug, Clone)]
pub struct InducedMdp {
    pub states: Vec<Vec<u16>>,
    pub action_labels: Vec<String>,
    /// Ground action index, `None` for NoOp.
    pub actions: Vec<Option<usize>>,
    /// `transitions[s][a]`.
    pub transitions: Vec<Vec<Vec<Transition>>>,
    /// Absorbing goal states.
    pub goal: Vec<bool>,
    pub gamma: f64,
    pub horizon: Option<u32>,
}

impl InducedMdp {
    /// Builds an MDP from explicit tables, checking that rows are
    /// distributions.
    pub fn from_parts(
        action_labels: Vec<String>,
        transitions: Vec<Vec<Vec<Transition>>>,
        goal: Vec<bool>,
        gamma: f64,
        horizon: Option<u32>,
    ) -> Result<Self> {
        let n = transitions.len();
        if goal.len() != n {
            return Err(ScoopError::OutOfRange(
                "goal flags do not match state count".into(),
            ));
        }
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != action_labels.len() {
                return Err(ScoopError::OutOfRange(format!("state {s}: wrong action count")));
            }
            for (a, dist) in row.iter().enumerate() {
                let total: f64 = dist.iter().map(|t| t.prob).sum();
                if (total - 1.0).abs() > 1e-9 || dist.iter().any(|t| t.next >= n || t.prob < 0.0) {
                    return Err(ScoopError::OutOfRange(format!(
                        "state {s}, action {a}: not a distribution"
                    )));
                }
            }
        }
        Ok(InducedMdp {
            states: (0..n).map(|s| vec![s as u16]).collect(),
            actions: vec![None; action_labels.len()],
            action_labels,
            transitions,
            goal,
            gamma,
            horizon,
        })
    }

    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn q_value(&self, values: &[f64], s: usize, a: usize) -> f64 {
        self.transitions[s][a]
            .iter()
            .map(|t| t.prob * (t.reward + self.gamma * values[t.next]))
            .sum()
    }

    /// Lexicographically first action within `TIE_EPSILON` of the best.
    pub fn greedy_action(&self, values: &[f64], s: usize) -> usize {
        let mut best = 0;
        let mut best_q = self.q_value(values, s, 0);
        for a in 1..self.action_labels.len() {
            let q = self.q_value(values, s, a);
            if q > best_q + TIE_EPSILON {
                best = a;
                best_q = q;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub mode: PlanMode,
    /// Goal bonus; the instance's goal reward when `None`.
    pub goal_reward: Option<f64>,
    pub state_cap: usize,
    pub tolerance: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            mode: PlanMode::Expected,
            goal_reward: None,
            state_cap: DEFAULT_STATE_CAP,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Enumerates states reachable from `start` under the believed rules.
pub fn induce_mdp(
    posterior: &HypothesisPosterior,
    start: &[u16],
    goal: &Goal,
    instance: &ProblemInstance,
    config: &PlannerConfig,
    steps_left: u32,
) -> Result<InducedMdp> {
    let model = &instance.model;
    let mixture: Vec<(usize, f64)> = match config.mode {
        PlanMode::Map => {
            let h = map_hypothesis(posterior);
            let idx = model
                .hypothesis_idx(h)
                .ok_or_else(|| ScoopError::UnknownHypothesis(h.to_string()))?;
            vec![(idx, 1.0)]
        }
        PlanMode::Expected => posterior
            .iter()
            .map(|(h, p)| {
                model
                    .hypothesis_idx(h)
                    .map(|i| (i, p))
                    .ok_or_else(|| ScoopError::UnknownHypothesis(h.to_string()))
            })
            .collect::<Result<_>>()?,
    };
    let goal_reward = config.goal_reward.unwrap_or(instance.goal_reward);

    let mut labelled: Vec<(String, Option<usize>)> = model
        .actions
        .iter()
        .enumerate()
        .map(|(i, a)| (a.label.clone(), Some(i)))
        .collect();
    labelled.push(("noop".into(), None));
    labelled.sort_by(|a, b| a.0.cmp(&b.0));
    let (action_labels, actions): (Vec<String>, Vec<Option<usize>>) = labelled.into_iter().unzip();

    let mut index: HashMap<Vec<u16>, usize> = HashMap::new();
    let mut states: Vec<Vec<u16>> = Vec::new();
    let mut goal_flags = Vec::new();
    let mut rows: Vec<Vec<Vec<Transition>>> = Vec::new();
    let mut queue = VecDeque::new();

    index.insert(start.to_vec(), 0);
    states.push(start.to_vec());
    goal_flags.push(goal.holds(model, start));
    queue.push_back(0usize);

    while let Some(s) = queue.pop_front() {
        let values = states[s].clone();
        let mut row = Vec::with_capacity(actions.len());
        for a in &actions {
            if goal_flags[s] {
                row.push(vec![Transition {
                    next: s,
                    prob: 1.0,
                    reward: 0.0,
                }]);
                continue;
            }
            let mut merged: BTreeMap<Vec<u16>, f64> = BTreeMap::new();
            for &(h, w) in &mixture {
                for (next, p) in transition_distribution(model, &values, &[*a], h)? {
                    *merged.entry(next).or_insert(0.0) += w * p;
                }
            }
            let cost = instance.cost_agent(*a);
            let mut dist = Vec::with_capacity(merged.len());
            for (next, p) in merged {
                if p == 0.0 {
                    continue;
                }
                let reaches = goal.holds(model, &next);
                let id = match index.get(&next) {
                    Some(&id) => id,
                    None => {
                        let id = states.len();
                        if id >= config.state_cap {
                            return Err(ScoopError::StateExplosion {
                                cap: config.state_cap,
                            });
                        }
                        index.insert(next.clone(), id);
                        states.push(next);
                        goal_flags.push(reaches);
                        queue.push_back(id);
                        id
                    }
                };
                dist.push(Transition {
                    next: id,
                    prob: p,
                    reward: cost + if reaches { goal_reward } else { 0.0 },
                });
            }
            row.push(dist);
        }
        rows.push(row);
    }

    let gamma = instance.gamma;
    Ok(InducedMdp {
        states,
        action_labels,
        actions,
        transitions: rows,
        goal: goal_flags,
        gamma,
        horizon: if gamma < 1.0 { None } else { Some(steps_left) },
    })
}

/// Optimal values, plus per-stage values for finite horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    /// Sup-norm Bellman residual after each sweep.
    pub residuals: Vec<f64>,
    /// `stages[k]` = values with k steps to go (finite horizon only).
    pub stages: Option<Vec<Vec<f64>>>,
}

/// Synchronous value iteration. Infinite-horizon problems need γ < 1; with
/// a horizon, exactly `horizon` backups are performed.
pub fn value_iterate(mdp: &InducedMdp, tol: f64) -> Result<ValueFunction> {
    let n = mdp.state_count();
    let backup = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|s| {
                if mdp.goal[s] {
                    return 0.0;
                }
                (0..mdp.action_labels.len())
                    .map(|a| mdp.q_value(v, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    if let Some(h) = mdp.horizon {
        let mut stages = vec![vec![0.0; n]];
        let mut residuals = Vec::new();
        for _ in 0..h {
            let next = backup(stages.last().expect("non-empty"));
            residuals.push(sup(&next, stages.last().expect("non-empty")));
            stages.push(next);
        }
        return Ok(ValueFunction {
            values: stages.last().cloned().expect("non-empty"),
            residuals,
            stages: Some(stages),
        });
    }
    if !(mdp.gamma < 1.0) {
        return Err(ScoopError::OutOfRange(
            "value iteration needs gamma < 1 or a finite horizon".into(),
        ));
    }
    let mut v = vec![0.0; n];
    let mut residuals = Vec::new();
    for _ in 0..MAX_SWEEPS {
        let next = backup(&v);
        let r = sup(&next, &v);
        residuals.push(r);
        v = next;
        if r <= tol {
            break;
        }
    }
    Ok(ValueFunction {
        values: v,
        residuals,
        stages: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<AgentAction>,
    pub expected_value: f64,
    /// Greedy action per reachable state, keyed by state index.
    #[serde(skip)]
    pub policy: Vec<Option<usize>>,
}

impl Plan {
    pub fn step_labels(&self) -> Vec<String> {
        self.steps.iter().map(|a| a.to_string()).collect()
    }
}

fn to_agent_action(mdp: &InducedMdp, instance: Option<&ProblemInstance>, a: usize) -> AgentAction {
    match (mdp.actions[a], instance) {
        (Some(i), Some(inst)) => AgentAction::env(inst.model.actions[i].term.clone()),
        (None, Some(_)) => AgentAction::NoOp,
        _ => match mdp.action_labels[a].parse() {
            Ok(term) if mdp.action_labels[a] != "noop" => AgentAction::env(term),
            _ => AgentAction::NoOp,
        },
    }
}

/// Greedy policy and its most-likely rollout from `start`. The rollout
/// stops at a goal state, at the horizon, on NoOp, or when a state repeats.
pub fn extract_plan(
    mdp: &InducedMdp,
    values: &ValueFunction,
    start: usize,
    instance: Option<&ProblemInstance>,
) -> Plan {
    let n = mdp.state_count();
    let stage_values = |to_go: u32| -> &[f64] {
        match &values.stages {
            Some(stages) => &stages[(to_go as usize).min(stages.len() - 1)],
            None => &values.values,
        }
    };
    let horizon = mdp.horizon.unwrap_or(u32::MAX);
    let policy: Vec<Option<usize>> = (0..n)
        .map(|s| {
            if mdp.goal[s] {
                None
            } else {
                Some(mdp.greedy_action(stage_values(horizon.saturating_sub(1)), s))
            }
        })
        .collect();

    let mut steps = Vec::new();
    let mut seen = vec![false; n];
    let mut s = start;
    let mut t = 0u32;
    while !mdp.goal[s] && !seen[s] && t < horizon && (t as usize) <= n {
        seen[s] = true;
        let to_go = horizon.saturating_sub(t + 1);
        let a = mdp.greedy_action(stage_values(to_go), s);
        if mdp.actions[a].is_none() && mdp.action_labels[a] == "noop" {
            break;
        }
        steps.push(to_agent_action(mdp, instance, a));
        let next = mdp.transitions[s][a]
            .iter()
            .fold(None::<&Transition>, |best, tr| match best {
                Some(b) if b.prob >= tr.prob => Some(b),
                _ => Some(tr),
            })
            .map(|tr| tr.next)
            .unwrap_or(s);
        s = next;
        t += 1;
    }
    Plan {
        steps,
        expected_value: values.values[start],
        policy,
    }
}
