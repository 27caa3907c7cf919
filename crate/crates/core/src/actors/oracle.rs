use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Edge, GroundModel, MechanismTemplate, ProblemInstance, WorldState};
use crate::error::{Result, ScoopError};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum OracleQuery {
    /// Does `cause` directly cause `effect`?
    Edge { cause: String, effect: String },
    /// Is this domain rule in effect?
    Rule { rule: String },
    /// Current value of a ground feature.
    State { atom: String },
    /// Fill a mechanism template with object arguments.
    Mechanism { template: String, args: Vec<String> },
}

impl OracleQuery {
    pub fn edge(edge: &Edge) -> Self {
        OracleQuery::Edge {
            cause: edge.cause.clone(),
            effect: edge.effect.clone(),
        }
    }
}

impl fmt::Display for OracleQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleQuery::Edge { cause, effect } => write!(f, "edge {cause} -> {effect}"),
            OracleQuery::Rule { rule } => write!(f, "rule {rule}"),
            OracleQuery::State { atom } => write!(f, "state {atom}"),
            OracleQuery::Mechanism { template, args } => {
                write!(f, "mechanism {template}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for OracleQuery {
    type Err = ScoopError;

    /// `edge C -> E`, `rule ID`, `state ATOM`, `mechanism TEMPLATE ARG...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        let rest = rest.trim();
        let err = |m: &str| ScoopError::syntax("oracle query", s, m);
        match head {
            "edge" => {
                let e: Edge = rest.parse()?;
                Ok(OracleQuery::edge(&e))
            }
            "rule" if !rest.is_empty() && !rest.contains(char::is_whitespace) => Ok(OracleQuery::Rule {
                rule: rest.to_string(),
            }),
            "state" => {
                let atom: crate::domain::Atom = rest.parse()?;
                Ok(OracleQuery::State {
                    atom: atom.to_string(),
                })
            }
            "mechanism" => {
                let mut parts = rest.split_whitespace();
                let template = parts.next().ok_or_else(|| err("missing template id"))?;
                Ok(OracleQuery::Mechanism {
                    template: template.to_string(),
                    args: parts.map(str::to_string).collect(),
                })
            }
            _ => Err(err("expected `edge`, `rule`, `state` or `mechanism`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    Causes,
    DoesNotCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum AnswerContent {
    #[serde(rename = "language")]
    Language { text: String },
    #[serde(rename = "chunk")]
    Chunk {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edge: Option<Edge>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rule: Option<String>,
        polarity: Polarity,
        probability: f64,
    },
    #[serde(rename = "obsfeedback")]
    ObsFeedback { readings: BTreeMap<String, String> },
    #[serde(rename = "cannot-answer")]
    CannotAnswer { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub content: AnswerContent,
    pub truthful: bool,
    pub cost_charged: f64,
}

/// Fills `{0}`, `{1}`, ... slots.
pub(crate) fn fill_slots(pattern: &str, args: &[&str]) -> String {
    let mut out = pattern.to_string();
    for (i, a) in args.iter().enumerate() {
        out = out.replace(&format!("{{{i}}}"), a);
    }
    out
}

pub(crate) fn slot_count(t: &MechanismTemplate) -> usize {
    (0..10)
        .take_while(|i| {
            let slot = format!("{{{i}}}");
            t.cause.contains(&slot) || t.effect.contains(&slot) || t.positive.contains(&slot)
        })
        .count()
}

/// Edge a template talks about, grounded with object names.
pub(crate) fn template_edge(t: &MechanismTemplate, args: &[&str]) -> Edge {
    Edge::new(fill_slots(&t.cause, args), fill_slots(&t.effect, args))
}

fn true_edge(model: &GroundModel, instance: &ProblemInstance, edge: &Edge) -> Option<f64> {
    let h = model.hypothesis_idx(&instance.true_hypothesis)?;
    model.edge_probability(h, edge)
}

/// Answers a query truthfully with respect to the instance's true rule set.
/// Every answer, including refusals, is charged β.
pub fn answer_oracle(query: &OracleQuery, instance: &ProblemInstance, state: &WorldState) -> OracleAnswer {
    answer_oracle_noisy(query, instance, state, 0.0)
}

/// Like [`answer_oracle`], but flips chunk polarity with probability
/// `epsilon`. The flip is keyed by (instance seed, query), so the function
/// stays pure.
pub fn answer_oracle_noisy(
    query: &OracleQuery,
    instance: &ProblemInstance,
    state: &WorldState,
    epsilon: f64,
) -> OracleAnswer {
    let cost = instance.oracle_query_cost;
    let refuse = |reason: String| OracleAnswer {
        content: AnswerContent::CannotAnswer { reason },
        truthful: true,
        cost_charged: cost,
    };
    let domain_model = &instance.domain_model;
    let mut answer = match query {
        OracleQuery::Edge { cause, effect } => {
            let known = |e: &str| {
                domain_model.declares_event(e)
                    || domain_model.edges.iter().any(|x| x.cause == e || x.effect == e)
            };
            if !known(cause) || !known(effect) {
                return refuse(format!("unknown event in {cause} -> {effect}"));
            }
            let edge = Edge::new(cause.clone(), effect.clone());
            let (polarity, probability) = match true_edge(domain_model, instance, &edge) {
                Some(p) => (Polarity::Causes, p),
                None => (Polarity::DoesNotCause, 0.0),
            };
            OracleAnswer {
                content: AnswerContent::Chunk {
                    edge: Some(edge),
                    rule: None,
                    polarity,
                    probability,
                },
                truthful: true,
                cost_charged: cost,
            }
        }
        OracleQuery::Rule { rule } => {
            let Some(decl) = instance.domain.rule(rule) else {
                return refuse(format!("unknown rule {rule}"));
            };
            let holds = instance
                .domain
                .hypotheses
                .get(&instance.true_hypothesis)
                .is_some_and(|rs| rs.contains(rule));
            OracleAnswer {
                content: AnswerContent::Chunk {
                    edge: None,
                    rule: Some(rule.clone()),
                    polarity: if holds {
                        Polarity::Causes
                    } else {
                        Polarity::DoesNotCause
                    },
                    probability: if holds { decl.probability } else { 0.0 },
                },
                truthful: true,
                cost_charged: cost,
            }
        }
        OracleQuery::State { atom } => match state.get(&instance.model, atom) {
            None => return refuse(format!("unknown feature {atom}")),
            Some(v) => OracleAnswer {
                content: AnswerContent::ObsFeedback {
                    readings: BTreeMap::from([(atom.clone(), v.to_string())]),
                },
                truthful: true,
                cost_charged: cost,
            },
        },
        OracleQuery::Mechanism { template, args } => {
            let Some(t) = instance.domain.templates.iter().find(|t| &t.id == template) else {
                return refuse(format!("unknown template {template}"));
            };
            if args.len() != slot_count(t) || args.iter().any(|a| !instance.domain.objects.contains_key(a)) {
                return refuse(format!("bad arguments for template {template}"));
            }
            let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let edge = template_edge(t, &arg_refs);
            let shown: Vec<&str> = args.iter().map(|a| instance.domain.display_name(a)).collect();
            let sentence = if true_edge(domain_model, instance, &edge).is_some() {
                &t.positive
            } else {
                &t.negative
            };
            OracleAnswer {
                content: AnswerContent::Language {
                    text: fill_slots(sentence, &shown),
                },
                truthful: true,
                cost_charged: cost,
            }
        }
    };

    if epsilon > 0.0 {
        if let AnswerContent::Chunk { polarity, .. } = &mut answer.content {
            let digest = Sha256::digest(format!("{}|{query}", instance.seed).as_bytes());
            let mut word = [0u8; 8];
            word.copy_from_slice(&digest[..8]);
            let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(word));
            if rng.random::<f64>() < epsilon {
                *polarity = match polarity {
                    Polarity::Causes => Polarity::DoesNotCause,
                    Polarity::DoesNotCause => Polarity::Causes,
                };
                answer.truthful = false;
            }
        }
    }
    answer
}
