//! The ReAct loop, the refine-then-plan subroutine, and the reasoners that
//! drive them.

mod memory;
mod react;
mod reasoner;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actors::{AnswerContent, OracleQuery};
use crate::domain::{ActionTerm, Goal, ProblemInstance};
use crate::env::{
    render_observation_text, AgentAction, Episode, ObservationKind, StepOutcome, UserAction, UserQuestion,
};
use crate::error::{Result, ScoopError};
use crate::knowledge::{
    derive_graph, parse_description, update, values_from_readings, CausalGraph, EdgeStatus, Evidence,
    HypothesisPosterior,
};
use crate::planner::{extract_plan, induce_mdp, value_iterate};
use crate::refinement::{
    edge_query_gain, estimate_refinement, select_refinement, AgentConfig, RefinementContext,
    RefinementDecision, GAIN_TIE,
};

pub use memory::{ConversationMemory, MemoryEntry, MemoryItem};
pub use react::{
    parse_react_step, EpisodeContext, Malformed, ReActStep, FORMAT_INSTRUCTIONS, REFINE_AND_ACT,
};
pub use reasoner::{
    ExternalReasoner, Reasoner, ReasonerInput, ReplayReasoner, ScriptedPolicy, ScriptedReasoner,
    REASONER_URL_VAR,
};

const REFORMAT: &str =
    "Malformed output. Reply with labeled lines: Thought:, Action:, Action Input:, or Answer:.";

/// The agent's working state across loop iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentKnowledge {
    pub posterior: HypothesisPosterior,
    pub graph: CausalGraph,
    pub goal: Option<Goal>,
    /// Latest environmental readings.
    pub readings: BTreeMap<String, String>,
    pub goal_requests: u32,
    pub user_silent: bool,
    /// Set when refinement last found no significant gain; cleared when
    /// the posterior moves.
    pub refine_exhausted: bool,
    pub last_plan_empty: bool,
    pub episode_over: bool,
    pub steps_left: u32,
}

impl AgentKnowledge {
    pub fn new(posterior: HypothesisPosterior, episode: &Episode) -> Self {
        let instance = episode.instance();
        let graph = derive_graph(&posterior, &instance.model);
        let readings = episode.observe().readings().cloned().unwrap_or_default();
        AgentKnowledge {
            posterior,
            graph,
            goal: None,
            readings,
            goal_requests: 0,
            user_silent: false,
            refine_exhausted: false,
            last_plan_empty: false,
            episode_over: episode.is_terminal(),
            steps_left: instance.max_steps.saturating_sub(episode.state().t),
        }
    }

    /// Does the known goal hold in the latest readings?
    pub fn goal_satisfied(&self) -> bool {
        self.goal.as_ref().is_some_and(|g| {
            g.0.iter()
                .all(|l| self.readings.get(&l.atom.to_string()) == Some(&l.value))
        })
    }

    fn set_posterior(&mut self, posterior: HypothesisPosterior, instance: &ProblemInstance) {
        if posterior.support != self.posterior.support || posterior.probs != self.posterior.probs {
            self.refine_exhausted = false;
            self.last_plan_empty = false;
        }
        self.posterior = posterior;
        self.graph = derive_graph(&self.posterior, &instance.model);
    }

    fn absorb(&mut self, evidence: Evidence, instance: &ProblemInstance) -> Result<()> {
        let next = update(&self.posterior, evidence, instance)?;
        self.set_posterior(next, instance);
        Ok(())
    }
}

/// Agent-side records interleaved with environment steps in traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AgentEvent {
    Reasoner {
        iteration: u32,
        t: u32,
        step: ReActStep,
    },
    Malformed {
        iteration: u32,
        t: u32,
        text: String,
    },
    Observation {
        iteration: u32,
        t: u32,
        text: String,
    },
    Decision {
        iteration: u32,
        t: u32,
        gain_bits: f64,
        chosen: String,
        /// The query or action carried out, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probe: Option<AgentAction>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        intervention_cost: Option<f64>,
        oracle_cost: f64,
    },
    Plan {
        iteration: u32,
        t: u32,
        steps: Vec<String>,
        expected_value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Answered { answer: String },
    Failed { reason: String },
}

impl EpisodeOutcome {
    pub fn is_answered(&self) -> bool {
        matches!(self, EpisodeOutcome::Answered { .. })
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub outcome: EpisodeOutcome,
    pub iterations: u32,
    pub memory: ConversationMemory,
    pub events: Vec<AgentEvent>,
    pub knowledge: AgentKnowledge,
}

/// Everything the loop mutates besides the episode.
struct Run<'a> {
    config: &'a AgentConfig,
    knowledge: AgentKnowledge,
    events: Vec<AgentEvent>,
    iteration: u32,
}

impl Run<'_> {
    fn t(&self, episode: &Episode) -> u32 {
        episode.state().t
    }

    /// Steps the environment and folds whatever was observed into the
    /// posterior. Returns the outcome and a rendering of it.
    fn env_step(&mut self, episode: &mut Episode, action: &AgentAction) -> Result<(StepOutcome, String)> {
        let pre = self.knowledge.readings.clone();
        let outcome = episode.step(action)?;
        let instance = episode.instance().clone();
        if let ObservationKind::Error { message } = &outcome.observation.kind {
            return Ok((outcome.clone(), message.clone()));
        }
        let post = episode.observe().readings().cloned().unwrap_or_default();
        let user_action = episode.records().last().map(|r| r.user_action.clone());
        let user_term = match &user_action {
            Some(UserAction::EnvAct { action }) => Some(action.clone()),
            _ => None,
        };
        let agent_term: Option<ActionTerm> = match action {
            AgentAction::EnvAct { action } => Some(action.clone()),
            _ => None,
        };
        self.knowledge.readings = post.clone();
        self.knowledge.episode_over = episode.is_terminal();
        self.knowledge.steps_left = instance.max_steps.saturating_sub(episode.state().t);

        let mut notes = Vec::new();
        if agent_term.is_some() || user_term.is_some() {
            let evidence = Evidence::InterventionResult {
                action: agent_term,
                user_action: user_term,
                pre,
                post,
            };
            if let Err(e) = self.knowledge.absorb(evidence, &instance) {
                notes.push(format!("error: {e}"));
            }
        }
        if let ObservationKind::OracleAnswer(answer) = &outcome.observation.kind {
            let evidence = match &answer.content {
                AnswerContent::Chunk { .. } => Some(Evidence::OracleChunk {
                    answer: answer.clone(),
                }),
                AnswerContent::Language { text } => parse_description(text, &instance),
                _ => None,
            };
            if let Some(ev) = evidence {
                if let Err(e) = self.knowledge.absorb(ev, &instance) {
                    notes.push(format!("error: {e}"));
                }
            }
        }
        let mut text = render_observation_text(&outcome.observation, &instance);
        if matches!(
            action,
            AgentAction::OracleQuery { .. } | AgentAction::UserQuery { .. }
        ) {
            if let Some(UserAction::EnvAct { action }) = &user_action {
                notes.push(format!("the user did {action}."));
            }
        }
        for m in episode.take_user_messages() {
            notes.push(format!("the user asks: {m}"));
        }
        for n in notes {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&n);
        }
        Ok((outcome, text))
    }

    fn dispatch_tool(&mut self, episode: &mut Episode, tool: &str, input: &str) -> Option<String> {
        let result = match tool {
            "AskOracle" => input
                .parse::<OracleQuery>()
                .and_then(|query| self.env_step(episode, &AgentAction::OracleQuery { query }))
                .map(|(_, text)| text),
            "AskUser" => input.parse::<UserQuestion>().and_then(|question| {
                let is_goal = question == UserQuestion::Goal;
                let (_, text) = self.env_step(episode, &AgentAction::UserQuery { question })?;
                if is_goal {
                    self.knowledge.goal_requests += 1;
                    match Goal::parse(&text) {
                        Ok(goal) if text.starts_with("goal:") => self.knowledge.goal = Some(goal),
                        _ => self.knowledge.user_silent = true,
                    }
                }
                Ok(text)
            }),
            "EnvAct" => {
                let action = if input.trim() == "noop" {
                    Ok(AgentAction::NoOp)
                } else {
                    input.parse::<ActionTerm>().map(AgentAction::env)
                };
                action
                    .and_then(|a| self.env_step(episode, &a))
                    .map(|(_, text)| text)
            }
            "Observe" => {
                let obs = episode.observe();
                self.knowledge.readings = obs.readings().cloned().unwrap_or_default();
                Ok(render_observation_text(&obs, episode.instance()))
            }
            _ => return None,
        };
        Some(result.unwrap_or_else(|e| match e {
            ScoopError::ContractViolation(_) => "error: the episode is over".to_string(),
            other => format!("error: {other}"),
        }))
    }

    fn refine(&mut self, episode: &mut Episode) -> Result<String> {
        let before = self.knowledge.graph.clone();
        let instance = episode.instance().clone();
        let t = self.t(episode);
        let proposal = {
            let ctx = RefinementContext {
                instance: &instance,
                readings: &self.knowledge.readings,
                goal: self.knowledge.goal.as_ref(),
                steps_left: self.knowledge.steps_left,
            };
            estimate_refinement(
                &self.knowledge.posterior,
                &self.knowledge.graph,
                &ctx,
                self.config,
            )?
        };
        let option = proposal.best_intervention.as_ref();
        let decision = select_refinement(&proposal, option, self.config);
        let (chosen, probe) = match &decision {
            RefinementDecision::Intervene { action } => ("intervene", Some(action.clone())),
            RefinementDecision::AskOracle { query } => (
                "ask_oracle",
                Some(AgentAction::OracleQuery { query: query.clone() }),
            ),
            RefinementDecision::NoRefinement => ("no_refinement", None),
        };
        self.events.push(AgentEvent::Decision {
            iteration: self.iteration,
            t,
            gain_bits: proposal.gain,
            chosen: chosen.into(),
            probe,
            intervention_cost: option.map(|o| o.cost),
            oracle_cost: self.config.oracle_cost,
        });
        let mut text = match decision {
            RefinementDecision::NoRefinement => {
                self.knowledge.refine_exhausted = true;
                return Ok("no significant gain.".into());
            }
            RefinementDecision::Intervene { action } => {
                let (_, seen) = self.env_step(episode, &action)?;
                format!("intervened with {action}: {seen}")
            }
            RefinementDecision::AskOracle { query } => {
                let (_, seen) = self.env_step(episode, &AgentAction::OracleQuery { query: query.clone() })?;
                format!("asked oracle {query}: {seen}")
            }
        };
        let changes = self.knowledge.graph.changes_since(&before);
        if changes.is_empty() {
            text.push_str(" graph unchanged.");
        } else {
            let parts: Vec<String> = changes
                .iter()
                .map(|(e, b)| {
                    let status = match b.status {
                        EdgeStatus::Confirmed => "confirmed",
                        EdgeStatus::Refuted => "refuted",
                        EdgeStatus::Unknown => "unknown",
                    };
                    format!("{e} {status}")
                })
                .collect();
            text.push_str(&format!(" graph: {}.", parts.join(", ")));
        }
        Ok(text)
    }

    fn plan_and_act(&mut self, episode: &mut Episode) -> Result<String> {
        let Some(goal) = self.knowledge.goal.clone() else {
            return Ok("plan: no goal known.".into());
        };
        let mut parts = Vec::new();
        for _ in 0..self.config.plan_steps_per_call.max(1) {
            if self.knowledge.goal_satisfied() {
                parts.push("plan: goal already holds.".to_string());
                break;
            }
            if episode.is_terminal() {
                parts.push("plan: the episode is over.".to_string());
                break;
            }
            let instance = episode.instance().clone();
            let start = values_from_readings(&instance.model, &self.knowledge.readings);
            let planner = self.config.planner();
            let mdp = induce_mdp(
                &self.knowledge.posterior,
                &start,
                &goal,
                &instance,
                &planner,
                self.knowledge.steps_left,
            )?;
            let vf = value_iterate(&mdp, planner.tolerance)?;
            let plan = extract_plan(&mdp, &vf, 0, Some(&instance));
            self.events.push(AgentEvent::Plan {
                iteration: self.iteration,
                t: self.t(episode),
                steps: plan.step_labels(),
                expected_value: plan.expected_value,
            });
            let Some(first) = plan.steps.first().cloned() else {
                self.knowledge.last_plan_empty = true;
                parts.push("plan: no useful action.".to_string());
                break;
            };
            let (_, seen) = self.env_step(episode, &first)?;
            parts.push(format!(
                "plan [{}] value {:.4}; did {first}: {seen}",
                plan.step_labels().join(", "),
                plan.expected_value
            ));
        }
        Ok(parts.join(" "))
    }
}

/// The refine-then-plan subroutine. Internal errors come back as
/// observation text tagged `error:`.
pub fn causal_refinement_and_action(
    action_input: &str,
    knowledge: &mut AgentKnowledge,
    config: &AgentConfig,
    episode: &mut Episode,
    events: &mut Vec<AgentEvent>,
) -> String {
    let mut run = Run {
        config,
        knowledge: knowledge.clone(),
        events: Vec::new(),
        iteration: episode.iteration,
    };
    let text = run.subroutine(action_input, episode);
    *knowledge = run.knowledge;
    events.extend(run.events);
    text
}

impl Run<'_> {
    fn subroutine(&mut self, action_input: &str, episode: &mut Episode) -> String {
        let input = action_input.trim().to_ascii_lowercase();
        let (refine, plan) = match input.as_str() {
            "refine" => (true, false),
            "plan" => (false, true),
            "refine+plan" | "refine and plan" | "both" => (true, true),
            _ => return format!("error: expected refine, plan or refine+plan, got {action_input:?}"),
        };
        let mut parts = Vec::new();
        let uncertain =
            self.knowledge.graph.unknown_edges().next().is_some() && !self.knowledge.refine_exhausted;
        if refine || uncertain {
            match self.refine(episode) {
                Ok(t) => parts.push(t),
                Err(e) => parts.push(format!("error: {e}")),
            }
        }
        if plan {
            match self.plan_and_act(episode) {
                Ok(t) => parts.push(t),
                Err(e) => parts.push(format!("error: {e}")),
            }
        }
        parts.join(" ")
    }
}

fn build_prompt(context: &EpisodeContext, memory: &ConversationMemory) -> String {
    format!(
        "{FORMAT_INSTRUCTIONS}\nUser prompt: {}\nEnvironment: {}\n\nMemory:\n{}\nNext step:\n",
        context.user_prompt,
        context.environment_description,
        memory.render()
    )
}

/// Runs the ReAct loop until the reasoner answers or `config.max_steps`
/// iterations pass.
pub fn run_episode(
    episode: &mut Episode,
    context: &EpisodeContext,
    config: &AgentConfig,
    reasoner: &mut dyn Reasoner,
    knowledge: AgentKnowledge,
) -> EpisodeResult {
    let mut run = Run {
        config,
        knowledge,
        events: Vec::new(),
        iteration: 0,
    };
    if run.knowledge.goal.is_none() && !context.user_prompt.trim().is_empty() {
        run.knowledge.goal = Goal::parse(&context.user_prompt).ok();
    }
    let mut memory = ConversationMemory::new();
    let mut retried = false;
    let instance = episode.instance().clone();
    if !run.knowledge.readings.is_empty() {
        let scene = Evidence::PassiveObservation {
            readings: run.knowledge.readings.clone(),
        };
        if let Err(e) = run.knowledge.absorb(scene, &instance) {
            tracing::warn!(error = %e, "initial scene contradicts the agent's belief");
        }
    }

    for iteration in 0..config.max_steps {
        run.iteration = iteration;
        episode.iteration = iteration;
        let t = episode.state().t;
        let prompt = build_prompt(context, &memory);
        let input = ReasonerInput {
            prompt: &prompt,
            context,
            memory: &memory,
            knowledge: &run.knowledge,
            instance: &instance,
            config,
        };
        let text = reasoner.respond(&input).unwrap_or_else(|e| {
            tracing::warn!(error = %e, "reasoner failed");
            String::new()
        });
        let step = match parse_react_step(&text) {
            Ok(step) => {
                retried = false;
                step
            }
            Err(Malformed(raw)) => {
                run.events.push(AgentEvent::Malformed {
                    iteration,
                    t,
                    text: raw,
                });
                if retried {
                    return finish(
                        run,
                        memory,
                        iteration + 1,
                        EpisodeOutcome::Failed {
                            reason: "malformed reasoner output".into(),
                        },
                    );
                }
                retried = true;
                memory.push_observation(REFORMAT);
                continue;
            }
        };
        run.events.push(AgentEvent::Reasoner {
            iteration,
            t,
            step: step.clone(),
        });
        memory.push_step(step.clone());
        if step.is_terminal() {
            return finish(
                run,
                memory,
                iteration + 1,
                EpisodeOutcome::Answered { answer: step.answer },
            );
        }
        let observation = if step.action == REFINE_AND_ACT {
            run.subroutine(&step.action_input, episode)
        } else {
            match run.dispatch_tool(episode, &step.action, &step.action_input) {
                Some(text) => text,
                None => format!("UnknownAction: {}", step.action),
            }
        };
        run.events.push(AgentEvent::Observation {
            iteration,
            t: episode.state().t,
            text: observation.clone(),
        });
        memory.push_observation(observation);
    }
    let iterations = config.max_steps;
    finish(
        run,
        memory,
        iterations,
        EpisodeOutcome::Failed {
            reason: "step budget exhausted".into(),
        },
    )
}

fn finish(
    run: Run<'_>,
    memory: ConversationMemory,
    iterations: u32,
    outcome: EpisodeOutcome,
) -> EpisodeResult {
    EpisodeResult {
        outcome,
        iterations,
        memory,
        events: run.events,
        knowledge: run.knowledge,
    }
}

/// Goal-free exploration: asks the oracle about the most informative
/// uncertain link of the whole domain while the allowance lasts. Returns
/// the amount spent.
pub fn free_exploration(
    knowledge: &mut AgentKnowledge,
    config: &AgentConfig,
    episode: &mut Episode,
    events: &mut Vec<AgentEvent>,
) -> Result<f64> {
    if config.budget <= 0.0 {
        return Ok(0.0);
    }
    let instance = episode.instance().clone();
    let mut run = Run {
        config,
        knowledge: knowledge.clone(),
        events: Vec::new(),
        iteration: episode.iteration,
    };
    let mut spent = 0.0;
    loop {
        if episode.is_terminal() || spent + config.oracle_cost > config.budget {
            break;
        }
        let graph = derive_graph(&run.knowledge.posterior, &instance.domain_model);
        let mut best: Option<(f64, OracleQuery)> = None;
        for (edge, _) in graph.unknown_edges() {
            let g = edge_query_gain(&run.knowledge.posterior, edge, &instance)?;
            if best.as_ref().is_none_or(|(b, _)| g > b + GAIN_TIE) {
                best = Some((g, OracleQuery::edge(edge)));
            }
        }
        let Some((gain, query)) = best.filter(|(g, _)| *g > config.gain_threshold) else {
            break;
        };
        let probe = AgentAction::OracleQuery { query };
        run.events.push(AgentEvent::Decision {
            iteration: run.iteration,
            t: episode.state().t,
            gain_bits: gain,
            chosen: "explore".into(),
            probe: Some(probe.clone()),
            intervention_cost: None,
            oracle_cost: config.oracle_cost,
        });
        run.env_step(episode, &probe)?;
        spent += config.oracle_cost;
    }
    *knowledge = run.knowledge;
    events.extend(run.events);
    Ok(spent)
}
