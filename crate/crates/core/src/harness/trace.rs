use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentEvent, EpisodeOutcome};
use crate::env::{AgentAction, StepRecord};
use crate::error::{Result, ScoopError};

/// One instance θ as played: the environment steps and the agent's own
/// records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub instance_id: String,
    pub true_hypothesis: String,
    pub steps: Vec<StepRecord>,
    pub outcome: EpisodeOutcome,
    #[serde(default)]
    pub events: Vec<AgentEvent>,
}

impl EpisodeTrace {
    /// T(θ).
    pub fn length(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn oracle_queries(&self) -> u32 {
        self.steps
            .iter()
            .filter(|s| matches!(s.agent_action, AgentAction::OracleQuery { .. }))
            .count() as u32
    }

    pub fn beta_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.beta).sum()
    }
}

/// The episodes of one session in play order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub agent: String,
    pub label: String,
    pub seed: u64,
    pub gamma: f64,
    pub episodes: Vec<EpisodeTrace>,
}

impl SessionTrace {
    pub fn new(agent: &str, label: &str, seed: u64, gamma: f64) -> Self {
        SessionTrace {
            agent: agent.into(),
            label: label.into(),
            seed,
            gamma,
            episodes: Vec::new(),
        }
    }

    /// T(−θ) for each episode: steps elapsed in all earlier episodes.
    pub fn offsets(&self) -> Vec<u64> {
        let mut acc = 0u64;
        self.episodes
            .iter()
            .map(|e| {
                let o = acc;
                acc += e.length() as u64;
                o
            })
            .collect()
    }

    pub fn beta_total(&self) -> f64 {
        self.episodes.iter().flat_map(|e| &e.steps).map(|s| s.beta).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceLine {
    Session {
        agent: String,
        label: String,
        seed: u64,
        gamma: f64,
    },
    Episode {
        instance_id: String,
        true_hypothesis: String,
        outcome: EpisodeOutcome,
        length: u32,
    },
    Step(StepRecord),
    Agent(AgentEvent),
}

/// JSON-lines form: a session line, then per episode a header line, its
/// steps, and its agent records.
pub fn write_trace<W: Write>(trace: &SessionTrace, mut out: W) -> Result<()> {
    let mut line = |l: &TraceLine| -> Result<()> {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    line(&TraceLine::Session {
        agent: trace.agent.clone(),
        label: trace.label.clone(),
        seed: trace.seed,
        gamma: trace.gamma,
    })?;
    for e in &trace.episodes {
        line(&TraceLine::Episode {
            instance_id: e.instance_id.clone(),
            true_hypothesis: e.true_hypothesis.clone(),
            outcome: e.outcome.clone(),
            length: e.length(),
        })?;
        for s in &e.steps {
            line(&TraceLine::Step(s.clone()))?;
        }
        for ev in &e.events {
            line(&TraceLine::Agent(ev.clone()))?;
        }
    }
    Ok(())
}

pub fn trace_to_string(trace: &SessionTrace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub fn read_trace<R: BufRead>(input: R) -> Result<SessionTrace> {
    let mut session: Option<SessionTrace> = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| ScoopError::Parse {
            line: n + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let orphan = || parse_error(n + 1, "record before its header");
        match parsed {
            TraceLine::Session {
                agent,
                label,
                seed,
                gamma,
            } => {
                if session.is_some() {
                    return Err(parse_error(n + 1, "second session header"));
                }
                session = Some(SessionTrace::new(&agent, &label, seed, gamma));
            }
            TraceLine::Episode {
                instance_id,
                true_hypothesis,
                outcome,
                ..
            } => session.as_mut().ok_or_else(orphan)?.episodes.push(EpisodeTrace {
                instance_id,
                true_hypothesis,
                steps: Vec::new(),
                outcome,
                events: Vec::new(),
            }),
            TraceLine::Step(s) => session
                .as_mut()
                .and_then(|t| t.episodes.last_mut())
                .ok_or_else(orphan)?
                .steps
                .push(s),
            TraceLine::Agent(ev) => session
                .as_mut()
                .and_then(|t| t.episodes.last_mut())
                .ok_or_else(orphan)?
                .events
                .push(ev),
        }
    }
    session.ok_or_else(|| parse_error(1, "empty trace"))
}

fn parse_error(line: usize, message: &str) -> ScoopError {
    ScoopError::Parse {
        line,
        column: 1,
        message: message.into(),
    }
}

pub fn save_trace(trace: &SessionTrace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_trace(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_trace(path: &Path) -> Result<SessionTrace> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file))
}
