use serde::{Deserialize, Serialize};

use crate::actors::{answer_oracle_noisy, answer_user, user_act, UserProfile};
use crate::domain::{ProblemInstance, WorldState};
use crate::error::{Result, ScoopError};

use super::{
    dynamics, observe, render_observation_text, resolve_agent, step, AgentAction, Observation,
    ObservationKind, StepOutcome, TextSource, UserAction, UserQuestion,
};

/// One environment step as written to trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    /// Digest of s_t, the state the step started from.
    pub state_digest: String,
    pub agent_action: AgentAction,
    pub user_action: UserAction,
    pub obs: Observation,
    pub r_u: f64,
    pub r_a: f64,
    pub beta: f64,
    /// Agent loop iteration that issued the step.
    #[serde(default)]
    pub iteration: u32,
}

/// Who plays the user.
pub trait UserDriver: Send {
    /// The user's move, given the state after the agent's action.
    fn act(&mut self, state: &WorldState, instance: &ProblemInstance) -> UserAction;
    /// Reply to an agent question.
    fn answer(&mut self, question: &UserQuestion, step_index: u32) -> Observation;
}

/// The scripted user backed by a profile.
#[derive(Debug, Clone)]
pub struct ScriptedUser {
    pub profile: UserProfile,
}

impl UserDriver for ScriptedUser {
    fn act(&mut self, state: &WorldState, instance: &ProblemInstance) -> UserAction {
        user_act(state, &self.profile, instance)
    }

    fn answer(&mut self, question: &UserQuestion, step_index: u32) -> Observation {
        answer_user(question, &mut self.profile, step_index)
    }
}

/// A running episode: the true world, both social actors and the trace.
pub struct Episode {
    instance: ProblemInstance,
    state: WorldState,
    user: Box<dyn UserDriver>,
    oracle_epsilon: f64,
    records: Vec<StepRecord>,
    user_messages: Vec<String>,
    pub iteration: u32,
}

impl Episode {
    pub fn new(instance: &ProblemInstance) -> Self {
        let profile = UserProfile::for_instance(instance);
        Self::with_user(instance, Box::new(ScriptedUser { profile }))
    }

    pub fn with_user(instance: &ProblemInstance, user: Box<dyn UserDriver>) -> Self {
        Episode {
            state: instance.initial_state.clone(),
            instance: instance.clone(),
            user,
            oracle_epsilon: 0.0,
            records: Vec::new(),
            user_messages: Vec::new(),
            iteration: 0,
        }
    }

    pub fn set_oracle_noise(&mut self, epsilon: f64) {
        self.oracle_epsilon = epsilon;
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn is_terminal(&self) -> bool {
        self.state.terminal
    }

    pub fn goal_holds(&self) -> bool {
        self.instance.goal_holds(&self.state.values)
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<StepRecord> {
        self.records
    }

    /// Questions the user put to the agent since the last call.
    pub fn take_user_messages(&mut self) -> Vec<String> {
        std::mem::take(&mut self.user_messages)
    }

    /// Scene descriptor text followed by the first environmental signal.
    pub fn initial_observations(&self) -> Vec<Observation> {
        let signal = observe(&self.state, &self.instance);
        let descriptor = Observation {
            step_index: self.state.t,
            kind: ObservationKind::LanguageText {
                text: render_observation_text(&signal, &self.instance),
                source: TextSource::Descriptor,
            },
        };
        vec![descriptor, signal]
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, &self.instance)
    }

    /// Advances the world by one step. Query answers replace the
    /// environmental signal as the step's observation.
    pub fn step(&mut self, agent: &AgentAction) -> Result<StepOutcome> {
        if self.state.terminal {
            return Err(ScoopError::ContractViolation(
                "step called on a terminal state".into(),
            ));
        }
        let model = &self.instance.model;
        // a question is answered before the user moves
        let reply = match agent {
            AgentAction::UserQuery { question } if resolve_agent(&self.instance, agent).is_ok() => {
                Some(self.user.answer(question, self.state.t + 1))
            }
            _ => None,
        };
        let user_action = match resolve_agent(&self.instance, agent) {
            Ok(agent_idx) => {
                let h = self.instance.true_hypothesis_idx();
                let coins = dynamics::Coins::draw(model, h, self.instance.seed, self.state.t as u64);
                let mid = WorldState {
                    values: dynamics::apply(model, &self.state.values, &[agent_idx], h, &coins),
                    t: self.state.t,
                    terminal: false,
                };
                self.user.act(&mid, &self.instance)
            }
            Err(_) => UserAction::NoOp,
        };
        let (next, mut outcome) = step(&self.state, agent, &user_action, &self.instance)?;
        if matches!(outcome.observation.kind, ObservationKind::Error { .. }) {
            return Ok(outcome);
        }
        match agent {
            AgentAction::OracleQuery { query } => {
                let answer = answer_oracle_noisy(query, &self.instance, &self.state, self.oracle_epsilon);
                debug_assert_eq!(answer.cost_charged, outcome.cost_query);
                outcome.observation = Observation {
                    step_index: next.t,
                    kind: ObservationKind::OracleAnswer(answer),
                };
            }
            AgentAction::UserQuery { .. } => {
                if let Some(obs) = reply {
                    outcome.observation = obs;
                }
            }
            _ => {}
        }
        if let UserAction::AgentQuery { text } = &user_action {
            self.user_messages.push(text.clone());
        }
        self.records.push(StepRecord {
            t: self.state.t,
            state_digest: self.state.digest(model),
            agent_action: agent.clone(),
            user_action,
            obs: outcome.observation.clone(),
            r_u: outcome.reward_user,
            r_a: outcome.cost_agent,
            beta: outcome.cost_query,
            iteration: self.iteration,
        });
        tracing::debug!(t = self.state.t, action = %agent, "step");
        self.state = next;
        Ok(outcome)
    }
}
