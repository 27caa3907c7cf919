use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ground::{rule_variables, GroundModel};
use super::spec::{DomainSpec, WorldConstraint, DEFAULT_HYPOTHESIS_CAP, WORLD_ENUMERATION_CAP};
use super::syntax::{is_variable, Atom, Literal, Trigger};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub element: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

struct Checker<'a> {
    domain: &'a DomainSpec,
    out: Vec<Violation>,
}

impl<'a> Checker<'a> {
    fn push(&mut self, element: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation {
            element: element.into(),
            message: message.into(),
        });
    }

    /// Checks an atom against feature declarations. Variables are allowed
    /// only when `lifted`.
    fn atom(&mut self, element: &str, atom: &Atom, lifted: bool) {
        let Some(decl) = self.domain.feature(&atom.feature) else {
            self.push(element, format!("unknown feature {:?}", atom.feature));
            return;
        };
        if decl.args.len() != atom.args.len() {
            self.push(
                element,
                format!(
                    "feature {} takes {} arguments, got {}",
                    decl.name,
                    decl.args.len(),
                    atom.args.len()
                ),
            );
            return;
        }
        for (arg, ty) in atom.args.iter().zip(&decl.args) {
            if is_variable(arg) {
                if !lifted {
                    self.push(element, format!("variable {arg} not allowed here"));
                }
            } else {
                match self.domain.objects.get(arg) {
                    None => self.push(element, format!("unknown object {arg:?}")),
                    Some(t) if t != ty => {
                        self.push(element, format!("object {arg} has type {t}, expected {ty}"))
                    }
                    _ => {}
                }
            }
        }
    }

    fn literal(&mut self, element: &str, lit: &Literal, lifted: bool) {
        self.atom(element, &lit.atom, lifted);
        if let Some(decl) = self.domain.feature(&lit.atom.feature) {
            if !decl.values.contains(&lit.value) {
                self.push(
                    element,
                    format!("value {:?} not in domain of {}", lit.value, decl.name),
                );
            }
        }
    }
}

/// Checks every structural invariant of a domain definition.
pub fn validate_domain(domain: &DomainSpec) -> ValidationReport {
    validate_domain_with_cap(domain, DEFAULT_HYPOTHESIS_CAP)
}

pub fn validate_domain_with_cap(domain: &DomainSpec, hypothesis_cap: usize) -> ValidationReport {
    let mut c = Checker {
        domain,
        out: Vec::new(),
    };

    for (obj, ty) in &domain.objects {
        if !domain.object_types.contains(ty) {
            c.push(format!("object {obj}"), format!("unknown object type {ty:?}"));
        }
    }

    let mut seen = HashSet::new();
    for f in &domain.features {
        let el = format!("feature {}", f.name);
        if !seen.insert(f.name.as_str()) {
            c.push(&el, "duplicate feature");
        }
        for ty in &f.args {
            if !domain.object_types.contains(ty) {
                c.push(&el, format!("unknown argument type {ty:?}"));
            }
        }
        if f.values.is_empty() {
            c.push(&el, "empty value domain");
        }
        if !f.values.contains(&f.default) {
            c.push(&el, format!("default {:?} not in value domain", f.default));
        }
        let distinct: HashSet<&String> = f.values.iter().collect();
        if distinct.len() != f.values.len() {
            c.push(&el, "duplicate values");
        }
    }

    let mut seen = HashSet::new();
    for a in &domain.actions {
        let el = format!("action {}", a.name);
        if !seen.insert(a.name.as_str()) {
            c.push(&el, "duplicate action");
        }
        for ty in &a.params {
            if !domain.object_types.contains(ty) {
                c.push(&el, format!("unknown parameter type {ty:?}"));
            }
        }
        if !(a.cost <= 0.0) {
            c.push(&el, "agent action cost must be non-positive");
        }
    }

    let mut seen = HashSet::new();
    for r in &domain.rules {
        let el = format!("rule {}", r.id);
        if !seen.insert(r.id.as_str()) {
            c.push(&el, "duplicate rule id");
        }
        if !(0.0..=1.0).contains(&r.probability) {
            c.push(&el, "probability outside [0, 1]");
        }
        if r.effects.is_empty() {
            c.push(&el, "rule has no effects");
        }
        match &r.trigger {
            Some(Trigger::Action(term)) => match domain.action(&term.name) {
                None => c.push(&el, format!("unknown action {:?}", term.name)),
                Some(decl) if decl.params.len() != term.args.len() => {
                    c.push(&el, format!("action {} arity mismatch", term.name))
                }
                Some(decl) => {
                    for (arg, ty) in term.args.iter().zip(&decl.params) {
                        if !is_variable(arg) && domain.objects.get(arg) != Some(ty) {
                            c.push(&el, format!("argument {arg} is not a declared {ty}"));
                        }
                    }
                }
            },
            Some(Trigger::Condition(l)) => c.literal(&el, l, true),
            None => {}
        }
        for l in r.preconditions.iter().chain(&r.effects) {
            c.literal(&el, l, true);
        }
        // self-contradiction: one rule assigning two values to the same atom,
        // or a condition rule whose effect falsifies its own precondition
        let mut assigned: BTreeMap<&Atom, &str> = BTreeMap::new();
        for e in &r.effects {
            if let Some(prev) = assigned.insert(&e.atom, &e.value) {
                if prev != e.value {
                    c.push(&el, format!("effects assign {} twice", e.atom));
                }
            }
        }
        if !matches!(r.trigger, Some(Trigger::Action(_))) {
            for e in &r.effects {
                if r.condition_atoms().iter().any(|a| **a == e.atom)
                    && r.preconditions
                        .iter()
                        .any(|p| p.atom == e.atom && p.value != e.value)
                {
                    c.push(&el, format!("effect on {} contradicts its precondition", e.atom));
                }
            }
        }
        if let Err(msg) = rule_variables(domain, r) {
            c.push(&el, msg);
        }
    }

    for (h, rules) in &domain.hypotheses {
        for r in rules {
            if domain.rule(r).is_none() {
                c.push(format!("hypothesis {h}"), format!("unknown rule {r:?}"));
            }
        }
        if !domain.rule_prior.contains_key(h) {
            c.push(format!("hypothesis {h}"), "missing from rule_prior");
        }
    }
    if domain.rule_prior.is_empty() {
        c.push("rule_prior", "empty prior");
    }
    for (h, p) in &domain.rule_prior {
        if !domain.hypotheses.contains_key(h) {
            c.push(format!("rule_prior {h}"), "unknown hypothesis");
        }
        if !(*p >= 0.0) || !p.is_finite() {
            c.push(format!("rule_prior {h}"), "negative or non-finite probability");
        }
    }
    let total: f64 = domain.rule_prior.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        c.push("rule_prior", format!("prior not normalized (sums to {total})"));
    }
    if domain.rule_prior.len() > hypothesis_cap {
        c.push(
            "rule_prior",
            format!(
                "{} hypotheses exceed the cap of {hypothesis_cap}",
                domain.rule_prior.len()
            ),
        );
    }

    for (i, wc) in domain.world_constraints.iter().enumerate() {
        let el = format!("world_constraints[{i}]");
        if wc.forbid.is_empty() {
            c.push(&el, "empty constraint forbids every world");
        }
        for l in &wc.forbid {
            c.literal(&el, l, true);
        }
    }

    for (atom, value) in &domain.initial {
        let el = format!("initial {atom}");
        match atom.parse::<Atom>() {
            Ok(a) => c.literal(&el, &Literal::new(a, value.clone()), false),
            Err(e) => c.push(&el, e.to_string()),
        }
    }

    if domain.goals.is_empty() {
        c.push("goals", "no goals declared");
    }
    for (i, g) in domain.goals.iter().enumerate() {
        let el = format!("goals[{i}]");
        for l in &g.goal {
            c.literal(&el, l, false);
        }
        if !(g.weight >= 0.0) {
            c.push(&el, "negative weight");
        }
    }
    if !domain.goals.is_empty() && !(domain.goals.iter().map(|g| g.weight).sum::<f64>() > 0.0) {
        c.push("goals", "goal weights sum to zero");
    }

    for t in &domain.templates {
        let el = format!("template {}", t.id);
        for text in [&t.positive, &t.negative] {
            if !text.contains("{0}") {
                c.push(&el, "sentence has no {0} slot");
            }
        }
    }

    let r = domain.rewards;
    if !(r.oracle_query_cost <= 0.0) || !(r.user_query_cost <= 0.0) {
        c.push("rewards", "query costs must be non-positive");
    }
    if !(domain.gamma > 0.0 && domain.gamma <= 1.0) {
        c.push("gamma", "must lie in (0, 1]");
    }
    if domain.max_steps == 0 {
        c.push("max_steps", "must be positive");
    }
    if let Some(s) = &domain.sampling {
        if let Some(t) = &s.object_type {
            if !domain.object_types.contains(t) {
                c.push("sampling", format!("unknown object type {t:?}"));
            }
        }
        let pool = domain
            .objects
            .values()
            .filter(|t| s.object_type.as_ref().is_none_or(|x| x == *t))
            .count();
        if s.count > pool {
            c.push("sampling", format!("count {} exceeds {pool} objects", s.count));
        }
    }

    // World enumeration needs a well-formed domain.
    if c.out.is_empty() {
        match GroundModel::compile(domain, &domain.objects) {
            Err(e) => c.push("domain", e.to_string()),
            Ok(model) => {
                let n = model.world_count();
                if n > WORLD_ENUMERATION_CAP {
                    c.push(
                        "world_constraints",
                        format!("{n} world configurations exceed the enumeration cap"),
                    );
                } else if !admissible_exists(&model, &domain.world_constraints, &[]) {
                    c.push("world_constraints", "no admissible world configuration");
                }
            }
        }
    }

    ValidationReport { violations: c.out }
}

/// Grounds constraints over a model; groundings touching absent objects are
/// dropped.
pub(crate) fn ground_constraints(
    model: &GroundModel,
    constraints: &[WorldConstraint],
) -> Vec<Vec<(usize, u16)>> {
    let mut out = Vec::new();
    for wc in constraints {
        let mut vars: Vec<String> = Vec::new();
        for l in &wc.forbid {
            for a in &l.atom.args {
                if is_variable(a) && !vars.contains(a) {
                    vars.push(a.clone());
                }
            }
        }
        let objects: Vec<&String> = model.objects.keys().collect();
        let mut assignments: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
        for v in &vars {
            let mut next = Vec::new();
            for b in &assignments {
                for o in &objects {
                    let mut b2 = b.clone();
                    b2.insert(v.clone(), (*o).clone());
                    next.push(b2);
                }
            }
            assignments = next;
        }
        'binding: for b in assignments {
            let mut conj = Vec::new();
            for l in &wc.forbid {
                let atom = Atom {
                    feature: l.atom.feature.clone(),
                    args: l
                        .atom
                        .args
                        .iter()
                        .map(|a| b.get(a).cloned().unwrap_or_else(|| a.clone()))
                        .collect(),
                };
                match model.literal(&Literal::new(atom, l.value.clone())) {
                    Some(x) => conj.push(x),
                    None => continue 'binding,
                }
            }
            out.push(conj);
        }
    }
    out
}

pub(crate) fn satisfies_constraints(values: &[u16], forbidden: &[Vec<(usize, u16)>]) -> bool {
    !forbidden
        .iter()
        .any(|conj| conj.iter().all(|(f, v)| values[*f] == *v))
}

/// Is there an admissible world in which every literal of `required` holds?
pub(crate) fn admissible_exists(
    model: &GroundModel,
    constraints: &[WorldConstraint],
    required: &[(usize, u16)],
) -> bool {
    let forbidden = ground_constraints(model, constraints);
    let sizes: Vec<u16> = model.features.iter().map(|f| f.values.len() as u16).collect();
    let mut values = vec![0u16; sizes.len()];
    for (f, v) in required {
        values[*f] = *v;
    }
    let fixed: HashSet<usize> = required.iter().map(|(f, _)| *f).collect();
    loop {
        if satisfies_constraints(&values, &forbidden) {
            return true;
        }
        // mixed-radix increment over free features
        let mut i = 0;
        loop {
            if i == sizes.len() {
                return false;
            }
            if fixed.contains(&i) {
                i += 1;
                continue;
            }
            values[i] += 1;
            if values[i] < sizes[i] {
                break;
            }
            values[i] = 0;
            i += 1;
        }
    }
}
