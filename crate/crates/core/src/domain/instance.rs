use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ground::GroundModel;
use super::spec::{DomainSpec, KnowledgeStatus};
use super::syntax::Literal;
use super::validate::{admissible_exists, ground_constraints, satisfies_constraints, validate_domain};
use crate::env::dynamics::{settle, Coins};
use crate::error::{Result, ScoopError};

/// Ground truth assignment of every ground feature, plus the step clock.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldState {
    pub values: Vec<u16>,
    pub t: u32,
    pub terminal: bool,
}

impl WorldState {
    pub fn assignments(&self, model: &GroundModel) -> BTreeMap<String, String> {
        model
            .features
            .iter()
            .zip(&self.values)
            .map(|(f, v)| (f.label.clone(), f.values[*v as usize].clone()))
            .collect()
    }

    pub fn get<'m>(&self, model: &'m GroundModel, atom: &str) -> Option<&'m str> {
        let f = model.feature_idx(atom)?;
        Some(model.value_name(f, self.values[f]))
    }

    /// Canonical serialization used for digests.
    pub fn canonical_json(&self, model: &GroundModel) -> String {
        serde_json::json!({
            "assignments": self.assignments(model),
            "t": self.t,
            "terminal": self.terminal,
        })
        .to_string()
    }

    /// Stable 64-bit digest of the canonical serialization.
    pub fn digest(&self, model: &GroundModel) -> String {
        let hash = Sha256::digest(self.canonical_json(model).as_bytes());
        let mut word = [0u8; 8];
        word.copy_from_slice(&hash[..8]);
        format!("{:016x}", u64::from_be_bytes(word))
    }
}

/// A conjunction of ground literals.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct Goal(pub Vec<Literal>);

impl Goal {
    pub fn holds(&self, model: &GroundModel, values: &[u16]) -> bool {
        self.0
            .iter()
            .all(|l| model.literal(l).is_some_and(|(f, v)| values[f] == v))
    }

    pub fn resolve(&self, model: &GroundModel) -> Option<Vec<(usize, u16)>> {
        self.0.iter().map(|l| model.literal(l)).collect()
    }

    /// Parses `a=b, c=d` (an optional `goal:` prefix is accepted).
    pub fn parse(text: &str) -> Result<Goal> {
        let body = text.trim();
        let body = body.strip_prefix("goal:").unwrap_or(body).trim();
        let body = body.trim_end_matches('.');
        if body.is_empty() {
            return Err(ScoopError::syntax("goal", text, "empty goal"));
        }
        let lits = body
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<Vec<Literal>>>()?;
        Ok(Goal(lits))
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// A grounded problem θ: objects, initial state, true rule set, user goal and
/// the reward/cost functions.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub id: String,
    pub domain: Arc<DomainSpec>,
    pub model: Arc<GroundModel>,
    /// Grounding over every object the domain declares. The oracle answers
    /// against this one, so it can speak about objects absent from θ.
    pub domain_model: Arc<GroundModel>,
    pub initial_state: WorldState,
    pub true_hypothesis: String,
    pub user_goal: Goal,
    pub goal_reward: f64,
    pub oracle_query_cost: f64,
    pub user_query_cost: f64,
    pub gamma: f64,
    pub max_steps: u32,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn objects(&self) -> &BTreeMap<String, String> {
        &self.model.objects
    }

    pub fn true_hypothesis_idx(&self) -> usize {
        self.model
            .hypothesis_idx(&self.true_hypothesis)
            .expect("true hypothesis is grounded")
    }

    pub fn goal_holds(&self, values: &[u16]) -> bool {
        self.user_goal.holds(&self.model, values)
    }

    /// r^u evaluated on the state a step produces.
    pub fn reward_user(&self, next: &[u16]) -> f64 {
        if self.goal_holds(next) {
            self.goal_reward
        } else {
            0.0
        }
    }

    /// r^a of a ground environment action; queries and NoOp cost nothing here.
    pub fn cost_agent(&self, action: Option<usize>) -> f64 {
        action.map(|a| self.model.actions[a].cost).unwrap_or(0.0)
    }
}

/// Grounds a domain over `objects` with a fixed true hypothesis and goal.
pub fn ground_instance(
    domain: &DomainSpec,
    objects: &BTreeMap<String, String>,
    hypothesis: &str,
    goal: &Goal,
    seed: u64,
) -> Result<ProblemInstance> {
    let report = validate_domain(domain);
    if !report.is_ok() {
        return Err(ScoopError::Invalid(report.violations));
    }
    ground_validated(Arc::new(domain.clone()), objects, hypothesis, goal, seed)
}

pub(crate) fn ground_validated(
    domain: Arc<DomainSpec>,
    objects: &BTreeMap<String, String>,
    hypothesis: &str,
    goal: &Goal,
    seed: u64,
) -> Result<ProblemInstance> {
    if !domain.rule_prior.contains_key(hypothesis) {
        return Err(ScoopError::UnknownHypothesis(hypothesis.to_string()));
    }
    for r in domain
        .rules
        .iter()
        .filter(|r| r.knowledge == KnowledgeStatus::Known)
    {
        let in_effect = domain
            .hypotheses
            .get(hypothesis)
            .is_some_and(|rs| rs.contains(&r.id));
        if !in_effect {
            return Err(ScoopError::ContractViolation(format!(
                "true hypothesis {hypothesis} lacks known rule {}",
                r.id
            )));
        }
    }
    for (o, t) in objects {
        if domain.objects.get(o) != Some(t) {
            return Err(ScoopError::OutOfRange(format!(
                "object {o}: {t} is not declared by the domain"
            )));
        }
    }
    let model = GroundModel::compile(&domain, objects)?;
    let required = goal.resolve(&model).ok_or_else(|| {
        ScoopError::VacuousInstance(format!("goal {goal} mentions atoms absent from this instance"))
    })?;
    let contradictory = required
        .iter()
        .any(|(f, v)| required.iter().any(|(g, w)| f == g && v != w));
    if required.is_empty()
        || contradictory
        || !admissible_exists(&model, &domain.world_constraints, &required)
    {
        return Err(ScoopError::VacuousInstance(format!(
            "goal {goal} is unsatisfiable in the admissible worlds"
        )));
    }

    let h = model.hypothesis_idx(hypothesis).expect("hypothesis grounded");
    let mut values = model.default_values();
    for (atom, value) in &domain.initial {
        if let Some(f) = model.feature_idx(atom) {
            if let Some(v) = model.value_index(f, value) {
                values[f] = v;
            }
        }
    }
    settle(&model, &mut values, h, &Coins::draw(&model, h, seed, u64::MAX));
    let forbidden = ground_constraints(&model, &domain.world_constraints);
    if !satisfies_constraints(&values, &forbidden) {
        return Err(ScoopError::ContractViolation(
            "initial state violates the world constraints".into(),
        ));
    }

    let domain_model = if objects == &domain.objects {
        None
    } else {
        Some(Arc::new(GroundModel::compile(&domain, &domain.objects)?))
    };
    let model = Arc::new(model);
    let domain_model = domain_model.unwrap_or_else(|| model.clone());

    Ok(ProblemInstance {
        id: format!("{}#{seed:016x}", domain.name),
        initial_state: WorldState {
            values,
            t: 0,
            terminal: false,
        },
        true_hypothesis: hypothesis.to_string(),
        user_goal: goal.clone(),
        goal_reward: domain.rewards.goal_reward,
        oracle_query_cost: domain.rewards.oracle_query_cost,
        user_query_cost: domain.rewards.user_query_cost,
        gamma: domain.gamma,
        max_steps: domain.max_steps,
        seed,
        domain_model,
        model,
        domain,
    })
}

/// A continual-learning session drawn from one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub domain: DomainSpec,
    pub instance_count: usize,
    pub seed: u64,
    pub shared_gamma: f64,
}

impl SessionSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(ScoopError::from_json)
    }

    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("session serializes");
        s.push('\n');
        s
    }
}

/// Draws the instances of a session. Deterministic in (spec, seed).
pub fn sample_session(spec: &SessionSpec) -> Result<Vec<ProblemInstance>> {
    if spec.instance_count == 0 {
        return Err(ScoopError::OutOfRange("instance_count must be at least 1".into()));
    }
    if !(spec.shared_gamma > 0.0 && spec.shared_gamma <= 1.0) {
        return Err(ScoopError::OutOfRange("shared_gamma must lie in (0, 1]".into()));
    }
    let report = validate_domain(&spec.domain);
    if !report.is_ok() {
        return Err(ScoopError::Invalid(report.violations));
    }
    let domain = Arc::new(spec.domain.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let ids: Vec<&String> = domain.rule_prior.keys().collect();
    let weights: Vec<f64> = domain.rule_prior.values().copied().collect();
    let prior =
        WeightedIndex::new(&weights).map_err(|e| ScoopError::OutOfRange(format!("rule_prior: {e}")))?;
    let persistent = domain
        .persistent_rules
        .then(|| ids[prior.sample(&mut rng)].clone());

    let mut out = Vec::with_capacity(spec.instance_count);
    for i in 0..spec.instance_count {
        let hypothesis = match &persistent {
            Some(h) => h.clone(),
            None => ids[prior.sample(&mut rng)].clone(),
        };
        let objects = sample_objects(&domain, &mut rng);
        let model = GroundModel::compile(&domain, &objects)?;
        let usable: Vec<(usize, f64)> = domain
            .goals
            .iter()
            .enumerate()
            .filter(|(_, g)| Goal(g.goal.clone()).resolve(&model).is_some())
            .map(|(j, g)| (j, g.weight))
            .collect();
        if usable.is_empty() || usable.iter().all(|(_, w)| *w == 0.0) {
            return Err(ScoopError::VacuousInstance(
                "no declared goal is expressible over the sampled objects".into(),
            ));
        }
        let pick = WeightedIndex::new(usable.iter().map(|(_, w)| *w))
            .map_err(|e| ScoopError::OutOfRange(format!("goal weights: {e}")))?;
        let goal = Goal(domain.goals[usable[pick.sample(&mut rng)].0].goal.clone());
        let seed = rng.random::<u64>();
        let mut instance = ground_validated(domain.clone(), &objects, &hypothesis, &goal, seed)?;
        instance.id = format!("inst-{i}");
        instance.gamma = spec.shared_gamma;
        out.push(instance);
    }
    Ok(out)
}

fn sample_objects(domain: &DomainSpec, rng: &mut ChaCha8Rng) -> BTreeMap<String, String> {
    let Some(sampling) = &domain.sampling else {
        return domain.objects.clone();
    };
    let in_pool = |t: &String| sampling.object_type.as_ref().is_none_or(|x| x == t);
    let pool: Vec<(&String, &String)> = domain.objects.iter().filter(|(_, t)| in_pool(t)).collect();
    let mut picked: Vec<usize> = sample(rng, pool.len(), sampling.count.min(pool.len())).into_vec();
    picked.sort_unstable();
    let mut objects: BTreeMap<String, String> = domain
        .objects
        .iter()
        .filter(|(_, t)| !in_pool(t))
        .map(|(o, t)| (o.clone(), t.clone()))
        .collect();
    for i in picked {
        objects.insert(pool[i].0.clone(), pool[i].1.clone());
    }
    objects
}
