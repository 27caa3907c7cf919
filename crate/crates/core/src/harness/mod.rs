//! Session runner, the session objective and the other metrics, trace
//! files, and suite evaluation.

mod suite;
mod trace;

use serde::{Deserialize, Serialize};

use crate::actors::{UserPolicy, UserProfile};
use crate::agent::{
    free_exploration, run_episode, AgentKnowledge, EpisodeContext, ExternalReasoner, Reasoner,
    ScriptedPolicy, ScriptedReasoner,
};
use crate::domain::{sample_session, ProblemInstance, SessionSpec};
use crate::env::{AgentAction, Episode, ObservationKind, ScriptedUser, UserDriver};
use crate::error::Result;
use crate::knowledge::{update, HypothesisPosterior};
use crate::refinement::AgentConfig;
use crate::tasks::{is_disambiguating, ConfoundedTask};

pub use suite::{run_suite, CellSummary, FamilyEntry, SuiteConfig, SuiteReport, SuiteRow};
pub use trace::{
    load_trace, read_trace, save_trace, trace_to_string, write_trace, EpisodeTrace, SessionTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerKind {
    #[default]
    Scripted,
    /// Language-model endpoint named by `SCOOP_REASONER_URL`.
    External,
}

impl std::str::FromStr for ReasonerKind {
    type Err = crate::ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scripted" => Ok(ReasonerKind::Scripted),
            "external" => Ok(ReasonerKind::External),
            _ => Err(crate::ScoopError::syntax(
                "reasoner",
                s,
                "expected scripted or external",
            )),
        }
    }
}

/// How to play a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub agent: ScriptedPolicy,
    pub reasoner: ReasonerKind,
    pub agent_config: AgentConfig,
    pub oracle_noise: f64,
    pub user_policy: UserPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            agent: ScriptedPolicy::Causal,
            reasoner: ReasonerKind::Scripted,
            agent_config: AgentConfig::default(),
            oracle_noise: 0.0,
            user_policy: UserPolicy::Passive,
        }
    }
}

impl RunConfig {
    pub fn for_agent(agent: ScriptedPolicy) -> Self {
        RunConfig {
            agent,
            ..RunConfig::default()
        }
    }

    fn reasoner(&self) -> Result<Box<dyn Reasoner>> {
        Ok(match self.reasoner {
            ReasonerKind::Scripted => Box::new(ScriptedReasoner::new(self.agent)),
            ReasonerKind::External => Box::new(ExternalReasoner::from_env()?),
        })
    }

    /// The agent configuration for one instance; the oracle price is read
    /// off the instance.
    pub fn config_for(&self, instance: &ProblemInstance) -> AgentConfig {
        AgentConfig {
            oracle_cost: instance.oracle_query_cost.abs(),
            ..self.agent_config.clone()
        }
    }

    pub fn scripted_user(&self, instance: &ProblemInstance) -> Box<dyn UserDriver> {
        Box::new(ScriptedUser {
            profile: UserProfile::for_instance(instance).with_policy(self.user_policy),
        })
    }
}

/// Plays one instance from `posterior`. The omniscient agent is handed the
/// goal and the true rules.
pub fn play_instance(
    instance: &ProblemInstance,
    run: &RunConfig,
    posterior: HypothesisPosterior,
    reasoner: &mut dyn Reasoner,
    user: Box<dyn UserDriver>,
) -> Result<(EpisodeTrace, AgentKnowledge)> {
    let mut episode = Episode::with_user(instance, user);
    episode.set_oracle_noise(run.oracle_noise);
    let config = run.config_for(instance);
    let posterior = if run.agent == ScriptedPolicy::Omniscient {
        HypothesisPosterior::from_weights(&[(instance.true_hypothesis.as_str(), 1.0)])?
    } else {
        posterior
    };
    let mut knowledge = AgentKnowledge::new(posterior, &episode);
    if run.agent == ScriptedPolicy::Omniscient {
        knowledge.goal = Some(instance.user_goal.clone());
    }
    let mut events = Vec::new();
    if run.agent == ScriptedPolicy::Causal {
        free_exploration(&mut knowledge, &config, &mut episode, &mut events)?;
    }
    let context = EpisodeContext::for_instance(instance, "");
    let result = run_episode(&mut episode, &context, &config, reasoner, knowledge);
    events.extend(result.events);
    let trace = EpisodeTrace {
        instance_id: instance.id.clone(),
        true_hypothesis: instance.true_hypothesis.clone(),
        steps: episode.into_records(),
        outcome: result.outcome,
        events,
    };
    Ok((trace, result.knowledge))
}

/// Plays every instance of a session. Only the causal agent carries its
/// posterior from one instance to the next.
pub fn run_session(spec: &SessionSpec, run: &RunConfig) -> Result<SessionTrace> {
    let instances = sample_session(spec)?;
    let prior = HypothesisPosterior::prior(&spec.domain)?;
    let mut carried = prior.clone();
    let mut reasoner = run.reasoner()?;
    let mut trace = SessionTrace::new(
        &run.agent.to_string(),
        &spec.domain.name,
        spec.seed,
        spec.shared_gamma,
    );
    for instance in &instances {
        let start = match run.agent {
            ScriptedPolicy::Causal => carried.clone(),
            _ => prior.clone(),
        };
        let (episode, knowledge) = play_instance(
            instance,
            run,
            start,
            reasoner.as_mut(),
            run.scripted_user(instance),
        )?;
        carried = knowledge.posterior;
        trace.episodes.push(episode);
    }
    Ok(trace)
}

/// Result of a confounded-evidence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundedOutcome {
    pub trace: SessionTrace,
    /// The first refinement carried out after the prefix.
    pub first_probe: Option<AgentAction>,
    pub disambiguating: bool,
}

/// Plays a confounded task with the prefix already absorbed, and checks
/// whether the first refinement splits the hypotheses the prefix left.
pub fn run_confounded(task: &ConfoundedTask, run: &RunConfig) -> Result<ConfoundedOutcome> {
    let instance = task.instance()?;
    let mut posterior = HypothesisPosterior::prior(&task.domain)?;
    for e in &task.prefix {
        posterior = update(&posterior, e.clone(), &instance)?;
    }
    let readings = crate::env::observe(&instance.initial_state, &instance)
        .readings()
        .cloned()
        .unwrap_or_default();
    let mut reasoner = run.reasoner()?;
    let (episode, _) = play_instance(
        &instance,
        run,
        posterior.clone(),
        reasoner.as_mut(),
        run.scripted_user(&instance),
    )?;
    let first_probe = episode.events.iter().find_map(|e| match e {
        crate::agent::AgentEvent::Decision { probe: Some(p), .. } => Some(p.clone()),
        _ => None,
    });
    let disambiguating = match &first_probe {
        Some(p) => is_disambiguating(&posterior, &readings, p, &instance)?,
        None => false,
    };
    let mut trace = SessionTrace::new(
        &run.agent.to_string(),
        &task.domain.name,
        task.seed,
        instance.gamma,
    );
    trace.episodes.push(episode);
    Ok(ConfoundedOutcome {
        trace,
        first_probe,
        disambiguating,
    })
}

/// Σ_θ Σ_t γ^(t + T(−θ)) (r^u + r^a + β), t zero-based within each episode.
pub fn compute_objective(session: &SessionTrace) -> f64 {
    let mut total = 0.0;
    for (episode, offset) in session.episodes.iter().zip(session.offsets()) {
        for (t, s) in episode.steps.iter().enumerate() {
            total += session.gamma.powi((t as u64 + offset) as i32) * (s.r_u + s.r_a + s.beta);
        }
    }
    total
}

/// Return of each episode discounted from its own first step.
pub fn per_instance_return(session: &SessionTrace) -> Vec<f64> {
    session
        .episodes
        .iter()
        .map(|e| {
            e.steps
                .iter()
                .enumerate()
                .map(|(t, s)| session.gamma.powi(t as i32) * (s.r_u + s.r_a + s.beta))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmortizationPoint {
    pub instance: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub queries: u32,
}

pub fn amortization_curve(session: &SessionTrace) -> Vec<AmortizationPoint> {
    per_instance_return(session)
        .into_iter()
        .zip(&session.episodes)
        .enumerate()
        .map(|(i, (ret, e))| AmortizationPoint {
            instance: i,
            ret,
            queries: e.oracle_queries(),
        })
        .collect()
}

/// Objective of the omniscient planner on the same session minus the
/// evaluated objective. Signed.
pub fn regret_vs_omniscient(session: &SessionTrace, spec: &SessionSpec, run: &RunConfig) -> Result<f64> {
    let omniscient = RunConfig {
        agent: ScriptedPolicy::Omniscient,
        reasoner: ReasonerKind::Scripted,
        ..run.clone()
    };
    let best = run_session(spec, &omniscient)?;
    Ok(compute_objective(&best) - compute_objective(session))
}

/// Sum of `cost_charged` over every oracle answer in the trace.
pub fn oracle_charges(session: &SessionTrace) -> f64 {
    session
        .episodes
        .iter()
        .flat_map(|e| &e.steps)
        .filter_map(|s| match &s.obs.kind {
            ObservationKind::OracleAnswer(a) => Some(a.cost_charged),
            _ => None,
        })
        .sum()
}

/// Metrics of one session, or means over several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub objective: f64,
    pub per_instance_return: Vec<f64>,
    pub queries_per_instance: Vec<f64>,
    pub beta_total: f64,
    pub regret_vs_omniscient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_scores: Option<Vec<f64>>,
}

impl MetricsReport {
    pub fn of_session(session: &SessionTrace, regret: Option<f64>) -> Self {
        // empty f64 sums are -0.0; reports print a plain zero
        let unsigned = |x: f64| x + 0.0;
        MetricsReport {
            objective: unsigned(compute_objective(session)),
            per_instance_return: per_instance_return(session).into_iter().map(unsigned).collect(),
            queries_per_instance: session
                .episodes
                .iter()
                .map(|e| e.oracle_queries() as f64)
                .collect(),
            beta_total: unsigned(session.beta_total()),
            regret_vs_omniscient: regret,
            battery_scores: None,
        }
    }

    /// Means of the per-session figures; `beta_total` is summed instead.
    pub fn aggregate(reports: &[MetricsReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mean_series = |f: &dyn Fn(&MetricsReport) -> &Vec<f64>| -> Vec<f64> {
            let len = reports.iter().map(|r| f(r).len()).max().unwrap_or(0);
            (0..len)
                .map(|i| {
                    let vals: Vec<f64> = reports.iter().filter_map(|r| f(r).get(i).copied()).collect();
                    vals.iter().sum::<f64>() / vals.len().max(1) as f64
                })
                .collect()
        };
        let regrets: Vec<f64> = reports.iter().filter_map(|r| r.regret_vs_omniscient).collect();
        let batteries: Vec<&Vec<f64>> = reports.iter().filter_map(|r| r.battery_scores.as_ref()).collect();
        MetricsReport {
            objective: mean(&|r| r.objective),
            per_instance_return: mean_series(&|r| &r.per_instance_return),
            queries_per_instance: mean_series(&|r| &r.queries_per_instance),
            beta_total: reports.iter().map(|r| r.beta_total).sum(),
            regret_vs_omniscient: (!regrets.is_empty())
                .then(|| regrets.iter().sum::<f64>() / regrets.len() as f64),
            battery_scores: (!batteries.is_empty()).then(|| {
                let len = batteries.iter().map(|b| b.len()).max().unwrap_or(0);
                (0..len)
                    .map(|i| {
                        let vals: Vec<f64> = batteries.iter().filter_map(|b| b.get(i).copied()).collect();
                        vals.iter().sum::<f64>() / vals.len().max(1) as f64
                    })
                    .collect()
            }),
        }
    }
}
