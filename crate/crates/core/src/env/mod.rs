//! The OO-POMDP itself: transition function, observation function, rewards.

pub mod dynamics;
mod episode;
mod render;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::actors::{OracleAnswer, OracleQuery};
use crate::domain::{ActionTerm, ProblemInstance, WorldState};
use crate::error::{Result, ScoopError};

pub use episode::{Episode, ScriptedUser, StepRecord, UserDriver};
pub use render::render_observation_text;

/// Questions the agent may put to the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "about", content = "feature", rename_all = "snake_case")]
pub enum UserQuestion {
    Goal,
    Preference(String),
}

impl fmt::Display for UserQuestion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserQuestion::Goal => write!(f, "goal"),
            UserQuestion::Preference(p) => write!(f, "preference {p}"),
        }
    }
}

impl std::str::FromStr for UserQuestion {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        if lower == "goal" || lower.contains("what is the goal") {
            return Ok(UserQuestion::Goal);
        }
        if let Some(rest) = s.strip_prefix("preference") {
            let feature = rest.trim();
            if !feature.is_empty() {
                return Ok(UserQuestion::Preference(feature.to_string()));
            }
        }
        Err(ScoopError::syntax(
            "user question",
            s,
            "expected `goal` or `preference <feature>`",
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentAction {
    EnvAct { action: ActionTerm },
    OracleQuery { query: OracleQuery },
    UserQuery { question: UserQuestion },
    NoOp,
}

impl AgentAction {
    pub fn env(action: ActionTerm) -> Self {
        AgentAction::EnvAct { action }
    }

    pub fn is_query(&self) -> bool {
        matches!(
            self,
            AgentAction::OracleQuery { .. } | AgentAction::UserQuery { .. }
        )
    }
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentAction::EnvAct { action } => write!(f, "{action}"),
            AgentAction::OracleQuery { query } => write!(f, "ask oracle: {query}"),
            AgentAction::UserQuery { question } => write!(f, "ask user: {question}"),
            AgentAction::NoOp => write!(f, "noop"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserAction {
    EnvAct { action: ActionTerm },
    AgentQuery { text: String },
    NoOp,
}

impl fmt::Display for UserAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserAction::EnvAct { action } => write!(f, "{action}"),
            UserAction::AgentQuery { text } => write!(f, "asks: {text}"),
            UserAction::NoOp => write!(f, "noop"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    User,
    Oracle,
    Descriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationKind {
    EnvSignal { readings: BTreeMap<String, String> },
    LanguageText { text: String, source: TextSource },
    OracleAnswer(OracleAnswer),
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step_index: u32,
    #[serde(flatten)]
    pub kind: ObservationKind,
}

impl Observation {
    pub fn readings(&self) -> Option<&BTreeMap<String, String>> {
        match &self.kind {
            ObservationKind::EnvSignal { readings } => Some(readings),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward_user: f64,
    pub cost_agent: f64,
    pub cost_query: f64,
    pub next_state_digest: String,
}

/// Initial state and the first environmental signal.
pub fn reset(instance: &ProblemInstance) -> (WorldState, Observation) {
    let state = instance.initial_state.clone();
    let obs = observe(&state, instance);
    (state, obs)
}

/// EnvSignal exposing exactly the observable features.
pub fn observe(state: &WorldState, instance: &ProblemInstance) -> Observation {
    let model = &instance.model;
    let readings = model
        .features
        .iter()
        .zip(&state.values)
        .filter(|(f, _)| f.observable)
        .map(|(f, v)| (f.label.clone(), f.values[*v as usize].clone()))
        .collect();
    Observation {
        step_index: state.t,
        kind: ObservationKind::EnvSignal { readings },
    }
}

/// Resolves an agent action to the ground action driving the dynamics.
/// `Ok(None)` for queries and NoOp; `Err` text for ill-typed actions.
pub(crate) fn resolve_agent(
    instance: &ProblemInstance,
    action: &AgentAction,
) -> std::result::Result<Option<usize>, String> {
    match action {
        AgentAction::EnvAct { action } => instance
            .model
            .action_idx(&action.to_string())
            .map(Some)
            .ok_or_else(|| format!("UnknownAction: {action}")),
        _ => Ok(None),
    }
}

pub(crate) fn resolve_user(
    instance: &ProblemInstance,
    action: &UserAction,
) -> std::result::Result<Option<usize>, String> {
    match action {
        UserAction::EnvAct { action } => instance
            .model
            .action_idx(&action.to_string())
            .map(Some)
            .ok_or_else(|| format!("UnknownAction: {action}")),
        _ => Ok(None),
    }
}

/// One time step: the agent acts, the world updates, then the user acts.
///
/// Queries and NoOp leave the dynamics untouched apart from the user's move,
/// but still advance `t`. Ill-typed actions are rejected with an error
/// observation and no state change.
pub fn step(
    state: &WorldState,
    agent: &AgentAction,
    user: &UserAction,
    instance: &ProblemInstance,
) -> Result<(WorldState, StepOutcome)> {
    if state.terminal {
        return Err(ScoopError::ContractViolation(
            "step called on a terminal state".into(),
        ));
    }
    let model = &instance.model;
    let resolved = resolve_agent(instance, agent).and_then(|a| Ok((a, resolve_user(instance, user)?)));
    let (agent_idx, user_idx) = match resolved {
        Ok(pair) => pair,
        Err(message) => {
            let outcome = StepOutcome {
                observation: Observation {
                    step_index: state.t,
                    kind: ObservationKind::Error { message },
                },
                reward_user: 0.0,
                cost_agent: 0.0,
                cost_query: 0.0,
                next_state_digest: state.digest(model),
            };
            return Ok((state.clone(), outcome));
        }
    };

    let h = instance.true_hypothesis_idx();
    let coins = dynamics::Coins::draw(model, h, instance.seed, state.t as u64);
    let values = dynamics::apply(model, &state.values, &[agent_idx, user_idx], h, &coins);
    let t = state.t + 1;
    let terminal = instance.goal_holds(&values) || t >= instance.max_steps;
    let next = WorldState { values, t, terminal };
    let cost_query = match agent {
        AgentAction::OracleQuery { .. } => instance.oracle_query_cost,
        AgentAction::UserQuery { .. } => instance.user_query_cost,
        _ => 0.0,
    };
    let outcome = StepOutcome {
        observation: observe(&next, instance),
        reward_user: instance.reward_user(&next.values),
        cost_agent: instance.cost_agent(agent_idx),
        cost_query,
        next_state_digest: next.digest(model),
    };
    Ok((next, outcome))
}
