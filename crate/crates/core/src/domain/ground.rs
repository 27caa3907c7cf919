//! Grounding a domain over a concrete object set.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::spec::{DomainSpec, KnowledgeStatus};
use super::syntax::{is_variable, ActionTerm, Atom, Edge, Literal, Trigger};
use crate::error::{Result, ScoopError};

#[derive(Debug, Clone)]
pub struct GroundFeature {
    pub atom: Atom,
    pub label: String,
    pub decl: usize,
    pub values: Vec<String>,
    pub default: u16,
    pub observable: bool,
    pub derived: bool,
}

#[derive(Debug, Clone)]
pub struct GroundAction {
    pub term: ActionTerm,
    pub label: String,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct GroundRule {
    pub id: String,
    pub decl: usize,
    pub trigger: Option<usize>,
    /// Preconditions plus a condition trigger, as (feature, value) pairs.
    pub conditions: Vec<(usize, u16)>,
    pub effects: Vec<(usize, u16)>,
    pub probability: f64,
    pub known: bool,
    pub edges: Vec<Edge>,
}

impl GroundRule {
    pub fn is_stochastic(&self) -> bool {
        self.probability > 0.0 && self.probability < 1.0
    }
}

#[derive(Debug, Clone)]
pub struct GroundHypothesis {
    pub id: String,
    pub rules: Vec<usize>,
    pub prior: f64,
    /// Edge -> the largest firing probability among rules producing it.
    pub edges: BTreeMap<Edge, f64>,
    /// Decl-level rule ids in effect.
    pub rule_ids: BTreeSet<String>,
}

/// A domain grounded over one object set. Hypotheses are indexed in sorted
/// id order, actions in sorted label order.
#[derive(Debug, Clone)]
pub struct GroundModel {
    pub objects: BTreeMap<String, String>,
    pub features: Vec<GroundFeature>,
    pub actions: Vec<GroundAction>,
    pub rules: Vec<GroundRule>,
    pub hypotheses: Vec<GroundHypothesis>,
    pub edges: BTreeSet<Edge>,
    feature_index: HashMap<String, usize>,
    action_index: HashMap<String, usize>,
    hypothesis_index: HashMap<String, usize>,
}

type Bindings = BTreeMap<String, String>;

fn substitute(args: &[String], b: &Bindings) -> Vec<String> {
    args.iter()
        .map(|a| b.get(a).cloned().unwrap_or_else(|| a.clone()))
        .collect()
}

fn ground_atom(atom: &Atom, b: &Bindings) -> Atom {
    Atom {
        feature: atom.feature.clone(),
        args: substitute(&atom.args, b),
    }
}

/// Replaces `?x` occurrences inside a free-form event pattern.
fn substitute_text(pattern: &str, b: &Bindings) -> String {
    // longest variable names first so `?ab` is not clobbered by `?a`
    let mut vars: Vec<(&String, &String)> = b.iter().collect();
    vars.sort_by_key(|(k, _)| std::cmp::Reverse(k.len()));
    let mut out = pattern.to_string();
    for (k, v) in vars {
        out = out.replace(k.as_str(), v);
    }
    out
}

/// Variables of a rule with their inferred types, in first-appearance order.
pub(crate) fn rule_variables(
    domain: &DomainSpec,
    rule: &super::spec::CausalRule,
) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut note = |var: &str, ty: Option<&String>| -> std::result::Result<(), String> {
        let Some(ty) = ty else {
            return Ok(());
        };
        match out.iter().find(|(v, _)| v == var) {
            Some((_, t)) if t != ty => Err(format!("variable {var} used with types {t} and {ty}")),
            Some(_) => Ok(()),
            None => {
                out.push((var.to_string(), ty.clone()));
                Ok(())
            }
        }
    };
    if let Some(Trigger::Action(term)) = &rule.trigger {
        let decl = domain.action(&term.name);
        for (i, a) in term.args.iter().enumerate() {
            if is_variable(a) {
                note(a, decl.and_then(|d| d.params.get(i)))?;
            }
        }
    }
    let literals = rule
        .preconditions
        .iter()
        .chain(rule.effects.iter())
        .chain(match &rule.trigger {
            Some(Trigger::Condition(l)) => Some(l),
            _ => None,
        });
    for lit in literals {
        let decl = domain.feature(&lit.atom.feature);
        for (i, a) in lit.atom.args.iter().enumerate() {
            if is_variable(a) {
                note(a, decl.and_then(|d| d.args.get(i)))?;
            }
        }
    }
    Ok(out)
}

fn cartesian(vars: &[(String, String)], objects: &BTreeMap<String, String>) -> Vec<Bindings> {
    let mut acc: Vec<Bindings> = vec![Bindings::new()];
    for (var, ty) in vars {
        let pool: Vec<&String> = objects.iter().filter(|(_, t)| *t == ty).map(|(o, _)| o).collect();
        let mut next = Vec::with_capacity(acc.len() * pool.len());
        for b in &acc {
            for o in &pool {
                let mut b2 = b.clone();
                b2.insert(var.clone(), (*o).clone());
                next.push(b2);
            }
        }
        acc = next;
    }
    acc
}

fn typed_tuples(types: &[String], objects: &BTreeMap<String, String>) -> Vec<Vec<String>> {
    let vars: Vec<(String, String)> = types
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("?{i}"), t.clone()))
        .collect();
    cartesian(&vars, objects)
        .into_iter()
        .map(|b| (0..types.len()).map(|i| b[&format!("?{i}")].clone()).collect())
        .collect()
}

impl GroundModel {
    /// Grounds `domain` over `objects`. Rules mentioning objects outside the
    /// set are dropped; they can never fire in this world.
    pub fn compile(domain: &DomainSpec, objects: &BTreeMap<String, String>) -> Result<Self> {
        let mut features = Vec::new();
        let mut feature_index = HashMap::new();
        for (decl_idx, decl) in domain.features.iter().enumerate() {
            let default = decl
                .values
                .iter()
                .position(|v| *v == decl.default)
                .ok_or_else(|| {
                    ScoopError::OutOfRange(format!(
                        "default {:?} of feature {} not in its value domain",
                        decl.default, decl.name
                    ))
                })? as u16;
            for args in typed_tuples(&decl.args, objects) {
                let atom = Atom {
                    feature: decl.name.clone(),
                    args,
                };
                let label = atom.to_string();
                feature_index.insert(label.clone(), features.len());
                features.push(GroundFeature {
                    atom,
                    label,
                    decl: decl_idx,
                    values: decl.values.clone(),
                    default,
                    observable: decl.observable,
                    derived: decl.derived,
                });
            }
        }

        let mut actions = Vec::new();
        for decl in &domain.actions {
            for args in typed_tuples(&decl.params, objects) {
                let term = ActionTerm {
                    name: decl.name.clone(),
                    args,
                };
                actions.push(GroundAction {
                    label: term.to_string(),
                    term,
                    cost: decl.cost,
                });
            }
        }
        actions.sort_by(|a, b| a.label.cmp(&b.label));
        let action_index = actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.label.clone(), i))
            .collect::<HashMap<_, _>>();

        let lookup_lit = |lit: &Literal, b: &Bindings| -> Option<(usize, u16)> {
            let atom = ground_atom(&lit.atom, b);
            let idx = *feature_index.get(&atom.to_string())?;
            let v = features[idx].values.iter().position(|v| *v == lit.value)? as u16;
            Some((idx, v))
        };

        let mut rules = Vec::new();
        let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
        for (decl_idx, rule) in domain.rules.iter().enumerate() {
            let vars = rule_variables(domain, rule).map_err(ScoopError::OutOfRange)?;
            for b in cartesian(&vars, objects) {
                let trigger = match &rule.trigger {
                    Some(Trigger::Action(term)) => {
                        let label = ActionTerm {
                            name: term.name.clone(),
                            args: substitute(&term.args, &b),
                        }
                        .to_string();
                        match action_index.get(&label) {
                            Some(i) => Some(*i),
                            None => continue,
                        }
                    }
                    _ => None,
                };
                let mut conditions = Vec::new();
                let mut ok = true;
                let cond_lits = rule.preconditions.iter().chain(match &rule.trigger {
                    Some(Trigger::Condition(l)) => Some(l),
                    _ => None,
                });
                for lit in cond_lits {
                    match lookup_lit(lit, &b) {
                        Some(c) => conditions.push(c),
                        None => ok = false,
                    }
                }
                let mut effects = Vec::new();
                for lit in &rule.effects {
                    match lookup_lit(lit, &b) {
                        Some(e) => effects.push(e),
                        None => ok = false,
                    }
                }
                if !ok {
                    continue;
                }
                let causes: Vec<String> = match &rule.causes {
                    Some(patterns) => patterns.iter().map(|p| substitute_text(p, &b)).collect(),
                    None => {
                        let mut c = Vec::new();
                        if let Some(t) = trigger {
                            c.push(actions[t].label.clone());
                        }
                        for (f, _) in &conditions {
                            c.push(features[*f].label.clone());
                        }
                        c
                    }
                };
                let mut edges = BTreeSet::new();
                for cause in &causes {
                    for (f, _) in &effects {
                        let effect = &features[*f].label;
                        if cause != effect {
                            edges.insert(Edge::new(cause.clone(), effect.clone()));
                        }
                    }
                }
                let id = if b.is_empty() {
                    rule.id.clone()
                } else {
                    format!(
                        "{}[{}]",
                        rule.id,
                        vars.iter()
                            .map(|(v, _)| b[v].as_str())
                            .collect::<Vec<_>>()
                            .join(",")
                    )
                };
                groups.entry(rule.id.as_str()).or_default().push(rules.len());
                rules.push(GroundRule {
                    id,
                    decl: decl_idx,
                    trigger,
                    conditions,
                    effects,
                    probability: rule.probability,
                    known: rule.knowledge == KnowledgeStatus::Known,
                    edges: edges.into_iter().collect(),
                });
            }
        }

        let mut hypotheses = Vec::new();
        let mut all_edges = BTreeSet::new();
        for (id, prior) in &domain.rule_prior {
            let rule_ids: BTreeSet<String> = domain
                .hypotheses
                .get(id)
                .map(|v| v.iter().cloned().collect())
                .unwrap_or_default();
            let mut members: Vec<usize> = rule_ids
                .iter()
                .flat_map(|r| groups.get(r.as_str()).cloned().unwrap_or_default())
                .collect();
            members.sort_unstable();
            let mut edges: BTreeMap<Edge, f64> = BTreeMap::new();
            for &r in &members {
                for e in &rules[r].edges {
                    let p = edges.entry(e.clone()).or_insert(0.0);
                    *p = p.max(rules[r].probability);
                }
            }
            all_edges.extend(edges.keys().cloned());
            hypotheses.push(GroundHypothesis {
                id: id.clone(),
                rules: members,
                prior: *prior,
                edges,
                rule_ids,
            });
        }
        let hypothesis_index = hypotheses
            .iter()
            .enumerate()
            .map(|(i, h)| (h.id.clone(), i))
            .collect();

        Ok(GroundModel {
            objects: objects.clone(),
            features,
            actions,
            rules,
            hypotheses,
            edges: all_edges,
            feature_index,
            action_index,
            hypothesis_index,
        })
    }

    pub fn feature_idx(&self, label: &str) -> Option<usize> {
        self.feature_index.get(label).copied()
    }

    pub fn action_idx(&self, label: &str) -> Option<usize> {
        self.action_index.get(label).copied()
    }

    pub fn hypothesis_idx(&self, id: &str) -> Option<usize> {
        self.hypothesis_index.get(id).copied()
    }

    /// Resolves a ground literal to (feature, value) indices.
    pub fn literal(&self, lit: &Literal) -> Option<(usize, u16)> {
        let f = self.feature_idx(&lit.atom.to_string())?;
        let v = self.features[f].values.iter().position(|v| *v == lit.value)?;
        Some((f, v as u16))
    }

    pub fn value_index(&self, feature: usize, value: &str) -> Option<u16> {
        self.features[feature]
            .values
            .iter()
            .position(|v| v == value)
            .map(|v| v as u16)
    }

    pub fn value_name(&self, feature: usize, value: u16) -> &str {
        &self.features[feature].values[value as usize]
    }

    /// Product of feature domain sizes, saturating.
    pub fn world_count(&self) -> u64 {
        self.features
            .iter()
            .fold(1u64, |acc, f| acc.saturating_mul(f.values.len() as u64))
    }

    pub fn default_values(&self) -> Vec<u16> {
        self.features.iter().map(|f| f.default).collect()
    }

    /// Whether `hypothesis` contains an edge, and at which probability.
    pub fn edge_probability(&self, hypothesis: usize, edge: &Edge) -> Option<f64> {
        self.hypotheses[hypothesis].edges.get(edge).copied()
    }

    /// Does the event name a ground action or feature of this model?
    pub fn declares_event(&self, event: &str) -> bool {
        self.feature_index.contains_key(event) || self.action_index.contains_key(event)
    }
}
