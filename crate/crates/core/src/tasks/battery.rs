use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::actors::{template_edge, OracleQuery};
use crate::domain::{ground_instance, DomainSpec, Edge, Goal, ProblemInstance};
use crate::env::AgentAction;
use crate::error::{Result, ScoopError};
use crate::knowledge::{
    derive_graph, outcome_distribution, update, values_from_readings, Evidence, HypothesisPosterior,
};
use crate::refinement::{edge_query_gain, estimate_refinement, AgentConfig, RefinementContext, GAIN_TIE};

use super::families::{gen_blicket, gen_boxes, BlicketLaw};

/// "Would the detector be on had `remove` not been placed?" asked about a
/// scene where `placed` sit on the detector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualQuestion {
    pub placed: Vec<String>,
    pub remove: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "probe", rename_all = "snake_case")]
pub enum BatteryProbe {
    /// Pick the most informative oracle question.
    QuerySelection {
        best_query: Option<OracleQuery>,
        best_gain: f64,
    },
    /// Answer a what-if question; scored against the true rules.
    Counterfactual {
        question: CounterfactualQuestion,
        truth: bool,
    },
}

/// One battery item: a domain, the evidence that shapes the posterior, and
/// what is asked of the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryItem {
    pub id: String,
    pub domain: DomainSpec,
    pub true_hypothesis: String,
    pub evidence: Vec<Evidence>,
    /// Replaces the evidence-shaped posterior when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_posterior: Option<BTreeMap<String, f64>>,
    pub probe: BatteryProbe,
}

impl BatteryItem {
    pub fn instance(&self) -> Result<ProblemInstance> {
        let goal = Goal(self.domain.goals[0].goal.clone());
        ground_instance(
            &self.domain,
            &self.domain.objects,
            &self.true_hypothesis,
            &goal,
            0,
        )
    }

    pub fn posterior(&self, instance: &ProblemInstance) -> Result<HypothesisPosterior> {
        if let Some(w) = &self.fixed_posterior {
            let pairs: Vec<(&str, f64)> = w.iter().map(|(h, p)| (h.as_str(), *p)).collect();
            return HypothesisPosterior::from_weights(&pairs);
        }
        let mut p = HypothesisPosterior::prior(&self.domain)?;
        for e in &self.evidence {
            p = update(&p, e.clone(), instance)?;
        }
        Ok(p)
    }

    /// The causal agent's response: its chosen refinement query, or its
    /// predictive answer to the what-if question.
    pub fn causal_agent_response(&self, config: &AgentConfig) -> Result<BatteryResponse> {
        let instance = self.instance()?;
        let posterior = self.posterior(&instance)?;
        match &self.probe {
            BatteryProbe::QuerySelection { .. } => {
                let graph = derive_graph(&posterior, &instance.model);
                let readings = BTreeMap::new();
                let ctx = RefinementContext {
                    instance: &instance,
                    readings: &readings,
                    goal: None,
                    steps_left: instance.max_steps,
                };
                let proposal = estimate_refinement(&posterior, &graph, &ctx, config)?;
                Ok(BatteryResponse::Query(proposal.best_query))
            }
            BatteryProbe::Counterfactual { question, .. } => {
                let mut on = 0.0;
                for (h, p) in posterior.iter() {
                    if counterfactual_under(&instance, h, question)? {
                        on += p;
                    }
                }
                Ok(BatteryResponse::Counterfactual(on >= 0.5))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "response", content = "value", rename_all = "snake_case")]
pub enum BatteryResponse {
    Query(Option<OracleQuery>),
    Counterfactual(bool),
}

fn counterfactual_under(
    instance: &ProblemInstance,
    hypothesis: &str,
    q: &CounterfactualQuestion,
) -> Result<bool> {
    let model = &instance.model;
    let h = model
        .hypothesis_idx(hypothesis)
        .ok_or_else(|| ScoopError::UnknownHypothesis(hypothesis.to_string()))?;
    let readings: BTreeMap<String, String> = q
        .placed
        .iter()
        .filter(|o| **o != q.remove)
        .map(|o| (format!("placed({o})"), "true".to_string()))
        .collect();
    let values = values_from_readings(model, &readings);
    let dist = outcome_distribution(model, &values, &[], h)?;
    let detector = model
        .feature_idx("detector")
        .expect("blicket domains have a detector");
    let on = model
        .value_index(detector, "on")
        .expect("detector has an on value");
    Ok(dist
        .iter()
        .filter(|(k, _)| k.iter().any(|(f, v)| *f == detector && *v == on))
        .map(|(_, p)| p)
        .sum::<f64>()
        >= 0.5)
}

/// Score in [0, 1]. Query items: chosen gain over the labeled best gain,
/// with 0/0 read as 1. What-if items: 1 when the answer matches the truth.
pub fn score_battery_item(item: &BatteryItem, response: &BatteryResponse) -> Result<f64> {
    match (&item.probe, response) {
        (BatteryProbe::QuerySelection { best_gain, .. }, BatteryResponse::Query(q)) => {
            if *best_gain <= GAIN_TIE {
                return Ok(1.0);
            }
            let instance = item.instance()?;
            let posterior = item.posterior(&instance)?;
            let gain = match q {
                Some(OracleQuery::Edge { cause, effect }) => {
                    edge_query_gain(&posterior, &Edge::new(cause, effect), &instance)?
                }
                _ => 0.0,
            };
            Ok((gain / best_gain).clamp(0.0, 1.0))
        }
        (BatteryProbe::Counterfactual { truth, .. }, BatteryResponse::Counterfactual(a)) => {
            Ok(if a == truth { 1.0 } else { 0.0 })
        }
        _ => Err(ScoopError::ContractViolation(format!(
            "response {response:?} does not fit item {}",
            item.id
        ))),
    }
}

fn scene(domain_objects: &[&str], placed: &[&str], detector: &str) -> Evidence {
    let mut readings: BTreeMap<String, String> = domain_objects
        .iter()
        .map(|o| {
            let v = if placed.contains(o) { "true" } else { "false" };
            (format!("placed({o})"), v.to_string())
        })
        .collect();
    readings.insert("detector".into(), detector.into());
    Evidence::PassiveObservation { readings }
}

fn query_item(id: &str, domain: DomainSpec, true_h: &str, evidence: Vec<Evidence>) -> Result<BatteryItem> {
    let mut item = BatteryItem {
        id: id.into(),
        domain,
        true_hypothesis: true_h.into(),
        evidence,
        fixed_posterior: None,
        probe: BatteryProbe::QuerySelection {
            best_query: None,
            best_gain: 0.0,
        },
    };
    label_best_query(&mut item)?;
    Ok(item)
}

fn label_best_query(item: &mut BatteryItem) -> Result<()> {
    let instance = item.instance()?;
    let posterior = item.posterior(&instance)?;
    let mut best: Option<(f64, OracleQuery)> = None;
    for edge in &instance.model.edges {
        let g = edge_query_gain(&posterior, edge, &instance)?;
        if best.as_ref().is_none_or(|(b, _)| g > b + GAIN_TIE) {
            best = Some((g, OracleQuery::edge(edge)));
        }
    }
    item.probe = match best {
        Some((g, q)) if g > GAIN_TIE => BatteryProbe::QuerySelection {
            best_query: Some(q),
            best_gain: g,
        },
        _ => BatteryProbe::QuerySelection {
            best_query: None,
            best_gain: 0.0,
        },
    };
    Ok(())
}

fn counterfactual_item(
    id: &str,
    domain: DomainSpec,
    true_h: &str,
    evidence: Vec<Evidence>,
    question: CounterfactualQuestion,
) -> Result<BatteryItem> {
    let mut item = BatteryItem {
        id: id.into(),
        domain,
        true_hypothesis: true_h.into(),
        evidence,
        fixed_posterior: None,
        probe: BatteryProbe::Counterfactual {
            question: question.clone(),
            truth: false,
        },
    };
    let instance = item.instance()?;
    let truth = counterfactual_under(&instance, true_h, &question)?;
    item.probe = BatteryProbe::Counterfactual { question, truth };
    Ok(item)
}

/// Fixed battery of question-selection and what-if items. `seed` tags the
/// generated domains.
pub fn gen_epistemic_battery(seed: u64) -> Result<Vec<BatteryItem>> {
    let or = BTreeSet::from([BlicketLaw::Or]);
    let both = BTreeSet::from([BlicketLaw::Or, BlicketLaw::And]);
    let two = ["o1", "o2"];
    let three = ["o1", "o2", "o3"];
    let mut items = vec![
        query_item("uniform-4", gen_blicket(2, &or, seed)?, "or[o1]", vec![])?,
        query_item("uniform-7", gen_blicket(2, &both, seed)?, "and[o1,o2]", vec![])?,
        query_item(
            "one-known",
            gen_blicket(3, &or, seed)?,
            "or[o1,o3]",
            vec![scene(&three, &["o1"], "on"), scene(&three, &["o2"], "off")],
        )?,
        query_item(
            "confounded",
            gen_blicket(3, &both, seed)?,
            "or[o2]",
            vec![scene(&three, &["o1", "o2"], "on")],
        )?,
        query_item("boxes-2", gen_boxes(2, seed)?, "chained/box_b", vec![])?,
    ];
    let mut degenerate = query_item("degenerate", gen_blicket(2, &or, seed)?, "or[o2]", vec![])?;
    degenerate.fixed_posterior = Some(BTreeMap::from([("or[o2]".to_string(), 1.0)]));
    label_best_query(&mut degenerate)?;
    items.push(degenerate);

    items.push(counterfactual_item(
        "why-off",
        gen_blicket(2, &or, seed)?,
        "or[o2]",
        vec![scene(&two, &["o1"], "off"), scene(&two, &["o1", "o2"], "on")],
        CounterfactualQuestion {
            placed: vec!["o1".into(), "o2".into()],
            remove: "o2".into(),
        },
    )?);
    items.push(counterfactual_item(
        "what-if-still-on",
        gen_blicket(2, &both, seed)?,
        "or[o1]",
        vec![scene(&two, &["o1"], "on")],
        CounterfactualQuestion {
            placed: vec!["o1".into(), "o2".into()],
            remove: "o2".into(),
        },
    )?);
    items.push(counterfactual_item(
        "what-if-alone",
        gen_blicket(3, &or, seed)?,
        "or[o1]",
        vec![scene(&three, &["o3"], "off"), scene(&three, &["o1"], "on")],
        CounterfactualQuestion {
            placed: vec!["o1".into(), "o3".into()],
            remove: "o1".into(),
        },
    )?);
    Ok(items)
}

/// Does `probe` split the surviving hypotheses, i.e. can its outcome differ
/// between two of them? Queries about the world state never split.
pub fn is_disambiguating(
    posterior: &HypothesisPosterior,
    readings: &BTreeMap<String, String>,
    probe: &AgentAction,
    instance: &ProblemInstance,
) -> Result<bool> {
    let distinct = |keys: Vec<String>| keys.iter().collect::<BTreeSet<_>>().len() > 1;
    match probe {
        AgentAction::EnvAct { action } => {
            let model = &instance.model;
            let Some(a) = model.action_idx(&action.to_string()) else {
                return Ok(false);
            };
            let pre = values_from_readings(model, readings);
            let mut keys = Vec::new();
            for h in &posterior.support {
                let hi = model
                    .hypothesis_idx(h)
                    .ok_or_else(|| ScoopError::UnknownHypothesis(h.clone()))?;
                keys.push(format!(
                    "{:?}",
                    outcome_distribution(model, &pre, &[Some(a)], hi)?
                ));
            }
            Ok(distinct(keys))
        }
        AgentAction::OracleQuery { query } => {
            let dm = &instance.domain_model;
            let edge = match query {
                OracleQuery::Edge { cause, effect } => Some(Edge::new(cause, effect)),
                OracleQuery::Mechanism { template, args } => instance
                    .domain
                    .templates
                    .iter()
                    .find(|t| t.id == *template)
                    .map(|t| template_edge(t, &args.iter().map(String::as_str).collect::<Vec<_>>())),
                _ => None,
            };
            let mut keys = Vec::new();
            for h in &posterior.support {
                let hi = dm
                    .hypothesis_idx(h)
                    .ok_or_else(|| ScoopError::UnknownHypothesis(h.clone()))?;
                keys.push(match (query, &edge) {
                    (_, Some(e)) => format!("{:?}", dm.edge_probability(hi, e)),
                    (OracleQuery::Rule { rule }, None) => {
                        dm.hypotheses[hi].rule_ids.contains(rule).to_string()
                    }
                    _ => String::new(),
                });
            }
            Ok(distinct(keys))
        }
        AgentAction::UserQuery { .. } | AgentAction::NoOp => Ok(false),
    }
}
