//! Fixed scenarios whose full traces are pinned under `tests/golden/`.

use std::path::PathBuf;

use scoop_core::agent::{
    causal_refinement_and_action, run_episode, AgentEvent, AgentKnowledge, EpisodeContext, EpisodeOutcome,
    ReplayReasoner,
};
use scoop_core::env::Episode;
use scoop_core::knowledge::HypothesisPosterior;
use scoop_core::refinement::AgentConfig;
use scoop_core::tasks::BlicketLaw;
use serde_json::json;

use super::blicket_instance;

pub const BLESS_VAR: &str = "SCOOP_BLESS";

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

/// Control-flow branches of the ReAct loop, each driven by canned replies.
pub const LOOP_SCENARIOS: &[(&str, &[&str])] = &[
    ("answer", &["Thought: nothing to do\nAnswer: done"]),
    (
        "known_tool",
        &[
            "Thought: ask about o1\nAction: AskOracle\nAction Input: edge placed(o1) -> detector",
            "Answer: asked",
        ],
    ),
    (
        "refine_and_act",
        &[
            "Thought: refine\nAction: CausalRefinementAndAction\nAction Input: refine",
            "Answer: refined",
        ],
    ),
    (
        "unknown_action",
        &["Thought: try\nAction: Foo\nAction Input: bar", "Answer: gave up"],
    ),
    (
        "budget_exhausted",
        &[
            "Action: Observe\nAction Input: scene",
            "Action: EnvAct\nAction Input: place(o2)",
            "Action: Observe\nAction Input: scene",
        ],
    ),
    ("malformed_then_fixed", &["hello", "Answer: fine"]),
    ("malformed_twice", &["hello", "still no labels"]),
];

pub fn loop_config() -> AgentConfig {
    AgentConfig {
        max_steps: 3,
        ..AgentConfig::default()
    }
}

pub struct LoopRun {
    pub name: &'static str,
    pub outcome: EpisodeOutcome,
    pub iterations: u32,
    pub memory_len: usize,
    pub events: Vec<AgentEvent>,
    pub line: String,
}

pub fn run_loop_scenarios() -> Vec<LoopRun> {
    LOOP_SCENARIOS
        .iter()
        .map(|(name, replies)| {
            let instance = blicket_instance(2, &[BlicketLaw::Or], "or[o1]", 7);
            let mut episode = Episode::new(&instance);
            let prior = HypothesisPosterior::prior(&instance.domain).unwrap();
            let knowledge = AgentKnowledge::new(prior, &episode);
            let context = EpisodeContext::for_instance(&instance, "detector=on");
            let mut reasoner = ReplayReasoner::new(replies.iter().copied());
            let result = run_episode(&mut episode, &context, &loop_config(), &mut reasoner, knowledge);
            let line = json!({
                "scenario": name,
                "outcome": result.outcome,
                "iterations": result.iterations,
                "memory": result.memory.render(),
                "events": result.events,
                "steps": episode.records(),
            })
            .to_string();
            LoopRun {
                name,
                outcome: result.outcome,
                iterations: result.iterations,
                memory_len: result.memory.len(),
                events: result.events,
                line,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Combo {
    pub significant: bool,
    pub option: bool,
    pub cheaper: bool,
}

impl Combo {
    pub fn all() -> Vec<Combo> {
        let mut out = Vec::new();
        for significant in [true, false] {
            for option in [true, false] {
                for cheaper in [true, false] {
                    out.push(Combo {
                        significant,
                        option,
                        cheaper,
                    });
                }
            }
        }
        out
    }

    /// The refinement branch as written: no gain, no refinement; a cheaper
    /// intervention wins; otherwise ask.
    pub fn expected(&self) -> &'static str {
        if !self.significant {
            "no_refinement"
        } else if self.option && self.cheaper {
            "intervene"
        } else {
            "ask_oracle"
        }
    }
}

pub struct ComboRun {
    pub combo: Combo,
    pub chosen: String,
    pub intervention_cost: Option<f64>,
    pub line: String,
}

/// One call of the refine subroutine per combination. An intervention
/// option exists when the live hypotheses disagree about a single
/// placement; placing costs 0.2 and the oracle 0.5 or 0.1.
pub fn run_refinement_combos() -> Vec<ComboRun> {
    Combo::all()
        .into_iter()
        .map(|combo| {
            let (truth, weights): (&str, [(&str, f64); 2]) = if combo.option {
                ("or[o1]", [("or[o1]", 0.5), ("or[o2]", 0.5)])
            } else {
                ("and[o1,o2]", [("and[o1,o2]", 0.5), ("or[]", 0.5)])
            };
            let instance = blicket_instance(2, &[BlicketLaw::Or, BlicketLaw::And], truth, 11);
            let mut episode = Episode::new(&instance);
            let posterior = HypothesisPosterior::from_weights(&weights).unwrap();
            let mut knowledge = AgentKnowledge::new(posterior, &episode);
            let config = AgentConfig {
                gain_threshold: if combo.significant { 0.01 } else { 10.0 },
                oracle_cost: if combo.cheaper { 0.5 } else { 0.1 },
                ..AgentConfig::default()
            };
            let mut events = Vec::new();
            let text =
                causal_refinement_and_action("refine", &mut knowledge, &config, &mut episode, &mut events);
            let (chosen, intervention_cost) = events
                .iter()
                .find_map(|e| match e {
                    AgentEvent::Decision {
                        chosen,
                        intervention_cost,
                        ..
                    } => Some((chosen.clone(), *intervention_cost)),
                    _ => None,
                })
                .expect("one decision per refine call");
            let line = json!({
                "combo": {"significant": combo.significant, "option": combo.option, "cheaper": combo.cheaper},
                "observation": text,
                "events": events,
                "posterior": knowledge.posterior.snapshot(),
                "steps": episode.records(),
            })
            .to_string();
            ComboRun {
                combo,
                chosen,
                intervention_cost,
                line,
            }
        })
        .collect()
}

pub fn render_loop_golden() -> String {
    run_loop_scenarios()
        .iter()
        .map(|r| r.line.clone() + "\n")
        .collect()
}

pub fn render_combo_golden() -> String {
    run_refinement_combos()
        .iter()
        .map(|r| r.line.clone() + "\n")
        .collect()
}
