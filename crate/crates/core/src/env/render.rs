use std::collections::BTreeMap;

use crate::actors::{AnswerContent, Polarity};
use crate::domain::{ProblemInstance, RenderStyle};

use super::{Observation, ObservationKind};

/// Templated English for an observation. Readings are ordered by feature
/// name, then by arguments.
pub fn render_observation_text(obs: &Observation, instance: &ProblemInstance) -> String {
    match &obs.kind {
        ObservationKind::EnvSignal { readings } => render_readings(readings, instance),
        ObservationKind::LanguageText { text, .. } => text.clone(),
        ObservationKind::OracleAnswer(answer) => match &answer.content {
            AnswerContent::Language { text } => text.clone(),
            AnswerContent::Chunk {
                edge,
                rule,
                polarity,
                probability,
            } => {
                let verb = match polarity {
                    Polarity::Causes => "causes",
                    Polarity::DoesNotCause => "does not cause",
                };
                match (edge, rule) {
                    (Some(e), _) => format!("{} {verb} {} (p={probability}).", e.cause, e.effect),
                    (None, Some(r)) => match polarity {
                        Polarity::Causes => format!("rule {r} holds (p={probability})."),
                        Polarity::DoesNotCause => format!("rule {r} does not hold."),
                    },
                    (None, None) => String::new(),
                }
            }
            AnswerContent::ObsFeedback { readings } => render_readings(readings, instance),
            AnswerContent::CannotAnswer { reason } => format!("cannot answer: {reason}."),
        },
        ObservationKind::Error { message } => message.clone(),
    }
}

pub(crate) fn render_readings(readings: &BTreeMap<String, String>, instance: &ProblemInstance) -> String {
    let model = &instance.model;
    // (feature name, args, value)
    let mut rows: Vec<(&str, &[String], &str, usize)> = Vec::new();
    for (atom, value) in readings {
        let Some(f) = model.feature_idx(atom) else {
            continue;
        };
        let gf = &model.features[f];
        rows.push((&gf.atom.feature, &gf.atom.args, value, gf.decl));
    }
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut sentences = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let (name, _, _, decl) = rows[i];
        let mut j = i;
        while j < rows.len() && rows[j].0 == name {
            j += 1;
        }
        let group = &rows[i..j];
        match instance.domain.features[decl].render {
            RenderStyle::Set => {
                let members: Vec<String> = group
                    .iter()
                    .filter(|r| r.2 == "true")
                    .map(|r| r.1.join(","))
                    .collect();
                if members.is_empty() {
                    sentences.push(format!("{name}: none."));
                } else {
                    sentences.push(format!("{name}: {}.", members.join(", ")));
                }
            }
            RenderStyle::Value => {
                for (_, args, value, _) in group {
                    if args.is_empty() {
                        sentences.push(format!("the {name} is {value}."));
                    } else {
                        sentences.push(format!("the {name} of {} is {value}.", args.join(", ")));
                    }
                }
            }
            RenderStyle::Predicate => {
                for (_, args, value, _) in group {
                    let subject = args.first().map(String::as_str).unwrap_or(name);
                    let rest = if args.len() > 1 {
                        format!(" {}", args[1..].join(" "))
                    } else {
                        String::new()
                    };
                    let sentence = match (*value, args.is_empty()) {
                        ("true", false) => format!("{subject} is {name}{rest}."),
                        ("false", false) => format!("{subject} is not {name}{rest}."),
                        ("true", true) => format!("{name} holds."),
                        ("false", true) => format!("{name} does not hold."),
                        (v, _) => format!("{} is {v}.", model_atom(name, args)),
                    };
                    sentences.push(sentence);
                }
            }
        }
        i = j;
    }
    sentences.join(" ")
}

fn model_atom(name: &str, args: &[String]) -> String {
    if args.is_empty() {
        name.to_string()
    } else {
        format!("{name}({})", args.join(","))
    }
}
