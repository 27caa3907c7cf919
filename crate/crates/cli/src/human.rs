use std::io::{BufRead, Write};

use anyhow::Result;
use scoop_core::agent::{ExternalReasoner, MemoryItem, Reasoner, ReasonerInput, ScriptedReasoner};
use scoop_core::domain::{sample_session, ActionTerm, ProblemInstance, SessionSpec, WorldState};
use scoop_core::env::{
    observe, render_observation_text, Observation, ObservationKind, TextSource, UserAction, UserDriver,
    UserQuestion,
};
use scoop_core::harness::{compute_objective, play_instance, ReasonerKind, RunConfig, SessionTrace};
use scoop_core::knowledge::HypothesisPosterior;

/// A person at the keyboard standing in for the user.
pub struct HumanUser {
    input: Box<dyn BufRead + Send>,
    output: Box<dyn Write + Send>,
}

impl HumanUser {
    pub fn new(input: Box<dyn BufRead + Send>, output: Box<dyn Write + Send>) -> Self {
        HumanUser { input, output }
    }

    fn ask(&mut self, prompt: &str) -> String {
        let _ = write!(self.output, "{prompt}");
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => String::new(),
            Ok(_) => line.trim().to_string(),
        }
    }
}

impl UserDriver for HumanUser {
    fn act(&mut self, state: &WorldState, instance: &ProblemInstance) -> UserAction {
        let scene = render_observation_text(&observe(state, instance), instance);
        let _ = writeln!(self.output, "[world] {scene}");
        let line = self.ask("your move (action, `ask <text>`, or blank)> ");
        if line.is_empty() {
            return UserAction::NoOp;
        }
        if let Some(text) = line.strip_prefix("ask ") {
            return UserAction::AgentQuery {
                text: text.trim().to_string(),
            };
        }
        match line.parse::<ActionTerm>() {
            Ok(action) => UserAction::EnvAct { action },
            Err(e) => {
                let _ = writeln!(self.output, "not an action ({e}); doing nothing");
                UserAction::NoOp
            }
        }
    }

    fn answer(&mut self, question: &UserQuestion, step_index: u32) -> Observation {
        let line = self.ask(&format!("the agent asks about your {question}> "));
        let text = match question {
            UserQuestion::Goal if !line.is_empty() && !line.starts_with("goal:") => format!("goal: {line}."),
            _ if line.is_empty() => "no answer.".to_string(),
            _ => line,
        };
        Observation {
            step_index,
            kind: ObservationKind::LanguageText {
                text,
                source: TextSource::User,
            },
        }
    }
}

/// Prints the agent's steps and observations as the loop runs.
struct Narrator {
    inner: Box<dyn Reasoner>,
    shown: usize,
}

impl Reasoner for Narrator {
    fn respond(&mut self, input: &ReasonerInput<'_>) -> scoop_core::Result<String> {
        for entry in &input.memory.entries()[self.shown..] {
            if let MemoryItem::Observation { text } = &entry.item {
                eprintln!("[observation] {text}");
            }
        }
        self.shown = input.memory.len();
        let text = self.inner.respond(input)?;
        for line in text.lines() {
            eprintln!("[agent] {line}");
        }
        Ok(text)
    }
}

pub fn repl(
    spec: &SessionSpec,
    run: &RunConfig,
    input: Box<dyn BufRead + Send>,
    output: Box<dyn Write + Send>,
) -> Result<()> {
    let instances = sample_session(spec)?;
    let instance = &instances[0];
    let inner: Box<dyn Reasoner> = match run.reasoner {
        ReasonerKind::Scripted => Box::new(ScriptedReasoner::new(run.agent)),
        ReasonerKind::External => Box::new(ExternalReasoner::from_env()?),
    };
    let mut narrator = Narrator { inner, shown: 0 };
    eprintln!("[scene] {}", scene_line(instance));
    let prior = HypothesisPosterior::prior(&spec.domain)?;
    let user = Box::new(HumanUser::new(input, output));
    let (episode, _) = play_instance(instance, run, prior, &mut narrator, user)?;
    eprintln!("[outcome] {:?}", episode.outcome);
    let mut session = SessionTrace::new(
        &run.agent.to_string(),
        &spec.domain.name,
        spec.seed,
        spec.shared_gamma,
    );
    session.episodes.push(episode);
    println!(
        "{}",
        serde_json::json!({ "objective": compute_objective(&session) })
    );
    Ok(())
}

fn scene_line(instance: &ProblemInstance) -> String {
    render_observation_text(&observe(&instance.initial_state, instance), instance)
}
