use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actors::{template_edge, AnswerContent, OracleAnswer, Polarity};
use crate::domain::{ActionTerm, DomainSpec, GroundModel, ProblemInstance};
use crate::env::dynamics::{observable_part, transition_distribution};
use crate::error::{Result, ScoopError};

/// Something the agent learned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "evidence", rename_all = "snake_case")]
pub enum Evidence {
    /// Readings before and after one step in which the agent (and possibly
    /// the user) acted.
    InterventionResult {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<ActionTerm>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        user_action: Option<ActionTerm>,
        pre: BTreeMap<String, String>,
        post: BTreeMap<String, String>,
    },
    /// A static snapshot; constrains only derived readings.
    PassiveObservation {
        readings: BTreeMap<String, String>,
    },
    OracleChunk {
        answer: OracleAnswer,
    },
    /// A parsed mechanism description: `positive` says the templated edge
    /// holds.
    OracleDescription {
        template: String,
        args: Vec<String>,
        positive: bool,
    },
}

/// Finite posterior over rule-set hypotheses. `support` holds the ids with
/// non-zero mass, in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisPosterior {
    pub support: Vec<String>,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub evidence_log: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub support: Vec<String>,
    pub probs: Vec<f64>,
    pub evidence_count: usize,
}

impl HypothesisPosterior {
    /// The rule prior restricted to hypotheses containing every known rule.
    pub fn prior(domain: &DomainSpec) -> Result<Self> {
        let consistent = domain.hypotheses_consistent_with_known();
        let mut support = Vec::new();
        let mut probs = Vec::new();
        for h in consistent {
            let p = domain.rule_prior[h];
            if p > 0.0 {
                support.push(h.to_string());
                probs.push(p);
            }
        }
        let z: f64 = probs.iter().sum();
        if support.is_empty() || z <= 0.0 {
            return Err(ScoopError::InconsistentDomain);
        }
        probs.iter_mut().for_each(|p| *p /= z);
        Ok(HypothesisPosterior {
            support,
            probs,
            evidence_log: Vec::new(),
        })
    }

    /// A posterior from explicit weights; zero weights are dropped.
    pub fn from_weights(weights: &[(&str, f64)]) -> Result<Self> {
        let mut pairs: Vec<(String, f64)> = weights
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(h, w)| (h.to_string(), *w))
            .collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let z: f64 = pairs.iter().map(|(_, w)| w).sum();
        if pairs.is_empty() || !z.is_finite() {
            return Err(ScoopError::OutOfRange(
                "posterior needs positive finite mass".into(),
            ));
        }
        Ok(HypothesisPosterior {
            support: pairs.iter().map(|(h, _)| h.clone()).collect(),
            probs: pairs.iter().map(|(_, w)| w / z).collect(),
            evidence_log: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.support.len() == 1
    }

    pub fn prob(&self, hypothesis: &str) -> f64 {
        self.support
            .iter()
            .position(|h| h == hypothesis)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.support
            .iter()
            .map(String::as_str)
            .zip(self.probs.iter().copied())
    }

    pub fn snapshot(&self) -> PosteriorSnapshot {
        PosteriorSnapshot {
            support: self.support.clone(),
            probs: self.probs.clone(),
            evidence_count: self.evidence_log.len(),
        }
    }

    /// Multiplies in per-hypothesis likelihoods and renormalizes.
    pub fn reweight(&self, likelihoods: &[f64]) -> Result<Self> {
        let mut support = Vec::new();
        let mut probs = Vec::new();
        for (i, h) in self.support.iter().enumerate() {
            let p = self.probs[i] * likelihoods[i];
            if p > 0.0 {
                support.push(h.clone());
                probs.push(p);
            }
        }
        let z: f64 = probs.iter().sum();
        if support.is_empty() || z <= 0.0 {
            return Err(ScoopError::EvidenceContradictsPrior);
        }
        probs.iter_mut().for_each(|p| *p /= z);
        Ok(HypothesisPosterior {
            support,
            probs,
            evidence_log: self.evidence_log.clone(),
        })
    }
}

/// Shannon entropy in bits.
pub fn entropy(posterior: &HypothesisPosterior) -> f64 {
    entropy_of(&posterior.probs)
}

pub fn entropy_of(probs: &[f64]) -> f64 {
    let z: f64 = probs.iter().sum();
    if z <= 0.0 {
        return 0.0;
    }
    probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| {
            let q = p / z;
            -q * q.log2()
        })
        .sum()
}

/// Most probable hypothesis; ties go to the smallest id.
pub fn map_hypothesis(posterior: &HypothesisPosterior) -> &str {
    let mut best = 0;
    for i in 1..posterior.support.len() {
        // support is sorted, so a strict improvement keeps the smaller id on ties
        if posterior.probs[i] > posterior.probs[best] {
            best = i;
        }
    }
    &posterior.support[best]
}

/// Reconstructs a full assignment from readings. Features without a
/// reading take their default; derived ones are recomputed by the dynamics.
pub fn values_from_readings(model: &GroundModel, readings: &BTreeMap<String, String>) -> Vec<u16> {
    let mut values = model.default_values();
    for (atom, v) in readings {
        if let Some(f) = model.feature_idx(atom) {
            if let Some(x) = model.value_index(f, v) {
                values[f] = x;
            }
        }
    }
    values
}

fn resolve_action(model: &GroundModel, term: &Option<ActionTerm>) -> Result<Option<usize>> {
    match term {
        None => Ok(None),
        Some(t) => model
            .action_idx(&t.to_string())
            .map(Some)
            .ok_or_else(|| ScoopError::OutOfRange(format!("unknown action {t}"))),
    }
}

/// Distribution over observable outcomes of `actions` from `pre` under one
/// hypothesis.
pub fn outcome_distribution(
    model: &GroundModel,
    pre: &[u16],
    actions: &[Option<usize>],
    hypothesis: usize,
) -> Result<BTreeMap<Vec<(usize, u16)>, f64>> {
    let mut out = BTreeMap::new();
    for (s, p) in transition_distribution(model, pre, actions, hypothesis)? {
        *out.entry(observable_part(model, &s)).or_insert(0.0) += p;
    }
    Ok(out)
}

fn readings_key(model: &GroundModel, readings: &BTreeMap<String, String>) -> Vec<(usize, u16)> {
    let values = values_from_readings(model, readings);
    observable_part(model, &values)
}

/// P(evidence | hypothesis) for a single hypothesis id. `epsilon` is the
/// oracle's polarity-flip probability.
pub fn likelihood(
    evidence: &Evidence,
    hypothesis: &str,
    instance: &ProblemInstance,
    epsilon: f64,
) -> Result<f64> {
    let chunk_fit = |consistent: bool| if consistent { 1.0 - epsilon } else { epsilon };
    match evidence {
        Evidence::InterventionResult {
            action,
            user_action,
            pre,
            post,
        } => {
            let model = &instance.model;
            let h = model
                .hypothesis_idx(hypothesis)
                .ok_or_else(|| ScoopError::UnknownHypothesis(hypothesis.to_string()))?;
            let a = resolve_action(model, action)?;
            let u = resolve_action(model, user_action)?;
            let pre_values = values_from_readings(model, pre);
            let dist = outcome_distribution(model, &pre_values, &[a, u], h)?;
            Ok(dist.get(&readings_key(model, post)).copied().unwrap_or(0.0))
        }
        Evidence::PassiveObservation { readings } => {
            let model = &instance.model;
            let h = model
                .hypothesis_idx(hypothesis)
                .ok_or_else(|| ScoopError::UnknownHypothesis(hypothesis.to_string()))?;
            let values = values_from_readings(model, readings);
            let dist = outcome_distribution(model, &values, &[], h)?;
            Ok(dist.get(&readings_key(model, readings)).copied().unwrap_or(0.0))
        }
        Evidence::OracleChunk { answer } => {
            let AnswerContent::Chunk {
                edge,
                rule,
                polarity,
                probability,
            } = &answer.content
            else {
                return Ok(1.0);
            };
            let says = *polarity == Polarity::Causes;
            let dm = &instance.domain_model;
            let h = dm
                .hypothesis_idx(hypothesis)
                .ok_or_else(|| ScoopError::UnknownHypothesis(hypothesis.to_string()))?;
            if let Some(e) = edge {
                let p = dm.edge_probability(h, e);
                let consistent = match p {
                    Some(q) => says && (q - probability).abs() <= 1e-9,
                    None => !says,
                };
                return Ok(chunk_fit(consistent));
            }
            if let Some(r) = rule {
                let holds = dm.hypotheses[h].rule_ids.contains(r);
                return Ok(chunk_fit(holds == says));
            }
            Ok(1.0)
        }
        Evidence::OracleDescription {
            template,
            args,
            positive,
        } => {
            let Some(t) = instance.domain.templates.iter().find(|t| &t.id == template) else {
                return Ok(1.0);
            };
            let dm = &instance.domain_model;
            let h = dm
                .hypothesis_idx(hypothesis)
                .ok_or_else(|| ScoopError::UnknownHypothesis(hypothesis.to_string()))?;
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let present = dm.edge_probability(h, &template_edge(t, &refs)).is_some();
            Ok(chunk_fit(present == *positive))
        }
    }
}

/// Exact Bayes update. Truthful chunks zero out every inconsistent
/// hypothesis.
pub fn update(
    posterior: &HypothesisPosterior,
    evidence: Evidence,
    instance: &ProblemInstance,
) -> Result<HypothesisPosterior> {
    update_noisy(posterior, evidence, instance, 0.0)
}

pub fn update_noisy(
    posterior: &HypothesisPosterior,
    evidence: Evidence,
    instance: &ProblemInstance,
    epsilon: f64,
) -> Result<HypothesisPosterior> {
    let likelihoods = posterior
        .support
        .iter()
        .map(|h| likelihood(&evidence, h, instance, epsilon))
        .collect::<Result<Vec<f64>>>()?;
    let mut next = posterior.reweight(&likelihoods)?;
    next.evidence_log.push(evidence);
    Ok(next)
}
