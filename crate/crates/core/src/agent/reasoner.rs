use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::ProblemInstance;
use crate::error::{Result, ScoopError};
use crate::knowledge::values_from_readings;
use crate::planner::{extract_plan, induce_mdp, value_iterate, PlanMode, PlannerConfig};
use crate::refinement::AgentConfig;

use super::memory::ConversationMemory;
use super::react::{EpisodeContext, ReActStep, REFINE_AND_ACT};
use super::AgentKnowledge;

/// What a reasoner sees each iteration. Language-model reasoners read only
/// `prompt`; scripted ones inspect the agent's knowledge directly.
pub struct ReasonerInput<'a> {
    pub prompt: &'a str,
    pub context: &'a EpisodeContext,
    pub memory: &'a ConversationMemory,
    pub knowledge: &'a AgentKnowledge,
    pub instance: &'a ProblemInstance,
    pub config: &'a AgentConfig,
}

pub trait Reasoner: Send {
    /// Raw text of one ReAct step.
    fn respond(&mut self, input: &ReasonerInput<'_>) -> Result<String>;
}

/// Deterministic stand-ins for a language model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptedPolicy {
    /// Refines through the causal subroutine, then plans.
    Causal,
    /// Oracle-aided ReAct: asks about every unknown edge directly, then acts
    /// on the most probable rule set.
    Baseline,
    /// Never queries; plans on its current belief.
    PriorPlanner,
    /// Plans with the true rules; used for regret.
    Omniscient,
}

impl fmt::Display for ScriptedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScriptedPolicy::Causal => "causal",
            ScriptedPolicy::Baseline => "baseline",
            ScriptedPolicy::PriorPlanner => "prior-planner",
            ScriptedPolicy::Omniscient => "omniscient",
        };
        write!(f, "{s}")
    }
}

impl FromStr for ScriptedPolicy {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "causal" => Ok(ScriptedPolicy::Causal),
            "baseline" => Ok(ScriptedPolicy::Baseline),
            "prior-planner" => Ok(ScriptedPolicy::PriorPlanner),
            "omniscient" => Ok(ScriptedPolicy::Omniscient),
            _ => Err(ScoopError::syntax(
                "agent",
                s,
                "expected causal, baseline, prior-planner or omniscient",
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedReasoner {
    pub policy: ScriptedPolicy,
}

impl ScriptedReasoner {
    pub fn new(policy: ScriptedPolicy) -> Self {
        ScriptedReasoner { policy }
    }

    pub fn decide(&self, input: &ReasonerInput<'_>) -> ReActStep {
        let k = input.knowledge;
        let Some(goal) = &k.goal else {
            if k.user_silent {
                return ReActStep::answer("the user will not say what they want", "no goal given");
            }
            return ReActStep::action("I do not know the goal yet", "AskUser", "goal");
        };
        if k.goal_satisfied() {
            return ReActStep::answer("the goal holds", &format!("goal reached: {goal}"));
        }
        if k.episode_over {
            return ReActStep::answer("no steps left", "out of steps");
        }
        match self.policy {
            ScriptedPolicy::Causal => {
                if k.last_plan_empty {
                    return ReActStep::answer("no plan improves on waiting", "goal unreachable");
                }
                if !k.refine_exhausted && k.graph.unknown_edges().next().is_some() {
                    ReActStep::action("some causal links are still uncertain", REFINE_AND_ACT, "refine")
                } else {
                    ReActStep::action("knowledge is good enough to act", REFINE_AND_ACT, "plan")
                }
            }
            ScriptedPolicy::Baseline => {
                if let Some((edge, _)) = k.graph.unknown_edges().next() {
                    return ReActStep::action(
                        "ask about the first uncertain link",
                        "AskOracle",
                        &format!("edge {edge}"),
                    );
                }
                self.act_on_plan(input, PlanMode::Map)
            }
            ScriptedPolicy::PriorPlanner | ScriptedPolicy::Omniscient => {
                self.act_on_plan(input, PlanMode::Expected)
            }
        }
    }

    fn act_on_plan(&self, input: &ReasonerInput<'_>, mode: PlanMode) -> ReActStep {
        let k = input.knowledge;
        let goal = k.goal.as_ref().expect("checked by caller");
        let instance = input.instance;
        let start = values_from_readings(&instance.model, &k.readings);
        let config = PlannerConfig {
            mode,
            state_cap: input.config.state_cap,
            ..PlannerConfig::default()
        };
        let plan = induce_mdp(&k.posterior, &start, goal, instance, &config, k.steps_left).and_then(|mdp| {
            let vf = value_iterate(&mdp, config.tolerance)?;
            Ok(extract_plan(&mdp, &vf, 0, Some(instance)))
        });
        match plan {
            Ok(plan) => match plan.steps.first() {
                Some(a) => ReActStep::action("follow the plan", "EnvAct", &a.to_string()),
                None => ReActStep::answer("no plan improves on waiting", "goal unreachable"),
            },
            Err(e) => ReActStep::answer("planning failed", &format!("planning failed: {e}")),
        }
    }
}

impl Reasoner for ScriptedReasoner {
    fn respond(&mut self, input: &ReasonerInput<'_>) -> Result<String> {
        Ok(self.decide(input).to_string())
    }
}

pub const REASONER_URL_VAR: &str = "SCOOP_REASONER_URL";

/// Proxies prompts to a chat endpoint: POST `{"prompt"}`, reply `{"text"}`.
/// A failed call is retried once; a second failure yields empty text, which
/// the loop treats as malformed.
pub struct ExternalReasoner {
    url: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ReasonerRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct ReasonerReply {
    text: String,
}

impl ExternalReasoner {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        ExternalReasoner {
            url: url.into(),
            agent,
        }
    }

    /// Reads the endpoint from `SCOOP_REASONER_URL`; 30 s timeout.
    pub fn from_env() -> Result<Self> {
        let url = std::env::var(REASONER_URL_VAR)
            .map_err(|_| ScoopError::Reasoner(format!("{REASONER_URL_VAR} is not set")))?;
        Ok(Self::new(url, Duration::from_secs(30)))
    }

    fn call(&self, prompt: &str) -> std::result::Result<String, String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(ReasonerRequest { prompt })
            .map_err(|e| e.to_string())?;
        let reply: ReasonerReply = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(reply.text)
    }
}

impl Reasoner for ExternalReasoner {
    fn respond(&mut self, input: &ReasonerInput<'_>) -> Result<String> {
        match self.call(input.prompt) {
            Ok(text) => Ok(text),
            Err(first) => {
                tracing::warn!(error = %first, "reasoner call failed, retrying");
                match self.call(input.prompt) {
                    Ok(text) => Ok(text),
                    Err(second) => {
                        tracing::warn!(error = %second, "reasoner call failed twice");
                        Ok(String::new())
                    }
                }
            }
        }
    }
}

/// Plays back canned outputs in order, then empty text.
#[derive(Debug, Clone, Default)]
pub struct ReplayReasoner {
    outputs: std::collections::VecDeque<String>,
}

impl ReplayReasoner {
    pub fn new<I, S>(outputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ReplayReasoner {
            outputs: outputs.into_iter().map(Into::into).collect(),
        }
    }
}

impl Reasoner for ReplayReasoner {
    fn respond(&mut self, _input: &ReasonerInput<'_>) -> Result<String> {
        Ok(self.outputs.pop_front().unwrap_or_default())
    }
}
