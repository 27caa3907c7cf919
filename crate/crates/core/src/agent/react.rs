use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::ProblemInstance;
use crate::env::{observe, render_observation_text};

/// The special action that hands control to the refine-then-plan
/// subroutine.
pub const REFINE_AND_ACT: &str = "CausalRefinementAndAction";

pub const FORMAT_INSTRUCTIONS: &str = "\
Respond with labeled lines, one field per line:
Thought: your reasoning about what to do next
Action: one of CausalRefinementAndAction, AskOracle, AskUser, EnvAct, Observe
Action Input: the argument for the action
Answer: the final answer, only when the task is finished

CausalRefinementAndAction takes `refine`, `plan` or `refine+plan`.
AskOracle takes `edge C -> E`, `rule ID`, `state ATOM` or `mechanism TEMPLATE ARGS`.
AskUser takes `goal` or `preference FEATURE`.
EnvAct takes a ground action such as `open(box_a)`, or `noop`.
Observe takes nothing.
";

/// One reasoner output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReActStep {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    pub answer: String,
}

impl ReActStep {
    pub fn action(thought: &str, action: &str, input: &str) -> Self {
        ReActStep {
            thought: thought.into(),
            action: action.into(),
            action_input: input.into(),
            answer: String::new(),
        }
    }

    pub fn answer(thought: &str, answer: &str) -> Self {
        ReActStep {
            thought: thought.into(),
            answer: answer.into(),
            ..ReActStep::default()
        }
    }

    pub fn is_terminal(&self) -> bool {
        !self.answer.is_empty()
    }
}

impl fmt::Display for ReActStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut lines = Vec::new();
        if !self.thought.is_empty() {
            lines.push(format!("Thought: {}", self.thought));
        }
        if !self.action.is_empty() {
            lines.push(format!("Action: {}", self.action));
            lines.push(format!("Action Input: {}", self.action_input));
        }
        if !self.answer.is_empty() {
            lines.push(format!("Answer: {}", self.answer));
        }
        write!(f, "{}", lines.join("\n"))
    }
}

/// No recognizable label in the reasoner's text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed(pub String);

/// Reads `Thought:`, `Action:`, `Action Input:` and `Answer:` lines in any
/// order. The last occurrence of a label wins; missing labels are empty.
pub fn parse_react_step(text: &str) -> Result<ReActStep, Malformed> {
    let mut step = ReActStep::default();
    let mut seen = false;
    for line in text.lines() {
        let line = line.trim();
        // "Action Input:" must be tried before "Action:"
        let fields: [(&str, &mut String); 4] = [
            ("Action Input:", &mut step.action_input),
            ("Thought:", &mut step.thought),
            ("Action:", &mut step.action),
            ("Answer:", &mut step.answer),
        ];
        for (label, slot) in fields {
            if let Some(rest) = line.strip_prefix(label) {
                *slot = rest.trim().to_string();
                seen = true;
                break;
            }
        }
    }
    if seen {
        Ok(step)
    } else {
        Err(Malformed(text.to_string()))
    }
}

/// Prompts the episode starts from. The multimodal slot is carried along
/// and never read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeContext {
    pub user_prompt: String,
    pub environment_description: String,
    #[serde(skip)]
    pub multimodal_placeholder: Vec<u8>,
}

impl EpisodeContext {
    /// Describes the scene and the available actions of `instance`.
    pub fn for_instance(instance: &ProblemInstance, user_prompt: &str) -> Self {
        let scene = render_observation_text(&observe(&instance.initial_state, instance), instance);
        let actions: Vec<&str> = instance.model.actions.iter().map(|a| a.label.as_str()).collect();
        let mut description = format!("domain {}.", instance.domain.name);
        if !scene.is_empty() {
            description.push(' ');
            description.push_str(&scene);
        }
        description.push_str(&format!(" actions: {}.", actions.join(", ")));
        EpisodeContext {
            user_prompt: user_prompt.to_string(),
            environment_description: description,
            multimodal_placeholder: Vec::new(),
        }
    }
}
