use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Goal, ProblemInstance, WorldState};
use crate::env::dynamics::transition_distribution;
use crate::env::{Observation, ObservationKind, TextSource, UserAction, UserQuestion};
use crate::error::{Result, ScoopError};

/// Built-in scripted user policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserPolicy {
    /// Always NoOp.
    Passive,
    /// One-step lookahead toward the goal under the true rules.
    GreedyGoal,
    /// Pings the agent every `every` steps.
    Prompter { every: u32 },
    /// Driven from outside (the REPL); `user_act` treats it as passive.
    Human,
}

impl fmt::Display for UserPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserPolicy::Passive => write!(f, "passive"),
            UserPolicy::GreedyGoal => write!(f, "greedy-goal"),
            UserPolicy::Prompter { every } => write!(f, "prompter:{every}"),
            UserPolicy::Human => write!(f, "human"),
        }
    }
}

impl FromStr for UserPolicy {
    type Err = ScoopError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passive" => Ok(UserPolicy::Passive),
            "greedy-goal" => Ok(UserPolicy::GreedyGoal),
            "human" => Ok(UserPolicy::Human),
            "prompter" => Ok(UserPolicy::Prompter { every: 3 }),
            _ => {
                let every = s
                    .strip_prefix("prompter:")
                    .and_then(|k| k.parse::<u32>().ok())
                    .filter(|k| *k > 0)
                    .ok_or_else(|| ScoopError::syntax("user policy", s, "unknown policy id"))?;
                Ok(UserPolicy::Prompter { every })
            }
        }
    }
}

impl Serialize for UserPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UserPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub goal: Goal,
    #[serde(default)]
    pub preference_weights: BTreeMap<String, f64>,
    pub user_policy: UserPolicy,
    /// Remaining answers to agent questions this episode.
    pub patience: u32,
}

impl UserProfile {
    pub fn for_instance(instance: &ProblemInstance) -> Self {
        UserProfile {
            goal: instance.user_goal.clone(),
            preference_weights: BTreeMap::new(),
            user_policy: UserPolicy::Passive,
            patience: 3,
        }
    }

    pub fn with_policy(mut self, policy: UserPolicy) -> Self {
        self.user_policy = policy;
        self
    }
}

fn user_text(step_index: u32, text: String) -> Observation {
    Observation {
        step_index,
        kind: ObservationKind::LanguageText {
            text,
            source: TextSource::User,
        },
    }
}

/// Goal disclosure is all-or-nothing. Each answer spends one unit of
/// patience; at zero the user replies "no answer".
pub fn answer_user(question: &UserQuestion, profile: &mut UserProfile, step_index: u32) -> Observation {
    if profile.patience == 0 {
        return user_text(step_index, "no answer".into());
    }
    profile.patience -= 1;
    let text = match question {
        UserQuestion::Goal => format!("goal: {}.", profile.goal),
        UserQuestion::Preference(f) => match profile.preference_weights.get(f) {
            Some(w) => format!("preference {f}: {w}."),
            None => format!("no preference for {f}."),
        },
    };
    user_text(step_index, text)
}

/// The scripted user's move at `state`.
pub fn user_act(state: &WorldState, profile: &UserProfile, instance: &ProblemInstance) -> UserAction {
    match profile.user_policy {
        UserPolicy::Passive | UserPolicy::Human => UserAction::NoOp,
        UserPolicy::Prompter { every } => {
            if state.t > 0 && state.t % every == 0 {
                UserAction::AgentQuery {
                    text: "how is it going?".into(),
                }
            } else {
                UserAction::NoOp
            }
        }
        UserPolicy::GreedyGoal => greedy_goal(state, profile, instance),
    }
}

fn satisfied(profile: &UserProfile, instance: &ProblemInstance, values: &[u16]) -> usize {
    profile
        .goal
        .0
        .iter()
        .filter(|l| instance.model.literal(l).is_some_and(|(f, v)| values[f] == v))
        .count()
}

fn greedy_goal(state: &WorldState, profile: &UserProfile, instance: &ProblemInstance) -> UserAction {
    let model = &instance.model;
    if profile.goal.holds(model, &state.values) {
        return UserAction::NoOp;
    }
    let h = instance.true_hypothesis_idx();
    let now = satisfied(profile, instance, &state.values) as f64;
    // (expected satisfied literals, action); first strict improvement wins ties
    let mut best: Option<(f64, usize)> = None;
    for a in 0..model.actions.len() {
        let Ok(dist) = transition_distribution(model, &state.values, &[None, Some(a)], h) else {
            continue;
        };
        let score: f64 = dist
            .iter()
            .map(|(s, p)| p * satisfied(profile, instance, s) as f64)
            .sum();
        if score > now && best.is_none_or(|(b, _)| score > b) {
            best = Some((score, a));
        }
    }
    match best {
        Some((_, a)) => UserAction::EnvAct {
            action: model.actions[a].term.clone(),
        },
        None => UserAction::NoOp,
    }
}
