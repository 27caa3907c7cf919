use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::syntax::{Atom, Literal, Trigger};
use crate::error::{Result, ScoopError};

/// Hypothesis spaces larger than this are rejected at load.
pub const DEFAULT_HYPOTHESIS_CAP: usize = 4096;
/// World-configuration enumeration limit (2^20 assignments).
pub const WORLD_ENUMERATION_CAP: u64 = 1 << 20;

/// A domain definition: object types, features, candidate causal rules,
/// admissible worlds, and the prior over which rule set is in effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub object_types: BTreeSet<String>,
    /// Reference object set; instances may ground a subset.
    #[serde(default)]
    pub objects: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub display_names: BTreeMap<String, String>,
    pub features: Vec<FeatureDecl>,
    #[serde(default)]
    pub actions: Vec<ActionDecl>,
    pub rules: Vec<CausalRule>,
    /// Hypothesis id -> ids of the rules in effect under it.
    pub hypotheses: BTreeMap<String, Vec<String>>,
    pub rule_prior: BTreeMap<String, f64>,
    #[serde(default)]
    pub world_constraints: Vec<WorldConstraint>,
    /// Initial values for non-default base features (atom -> value).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial: BTreeMap<String, String>,
    pub goals: Vec<WeightedGoal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub templates: Vec<MechanismTemplate>,
    #[serde(default)]
    pub persistent_rules: bool,
    #[serde(default)]
    pub rewards: RewardSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    /// When present, each sampled instance grounds a random subset of objects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<ObjectSampling>,
}

fn default_gamma() -> f64 {
    0.95
}

fn default_max_steps() -> u32 {
    20
}

fn default_true() -> bool {
    true
}

fn default_probability() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FeatureDecl {
    pub name: String,
    /// Argument types.
    #[serde(default)]
    pub args: Vec<String>,
    pub values: Vec<String>,
    pub default: String,
    #[serde(default = "default_true")]
    pub observable: bool,
    /// Derived features are reset to `default` and recomputed by condition
    /// rules every step.
    #[serde(default)]
    pub derived: bool,
    #[serde(default)]
    pub render: RenderStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RenderStyle {
    /// `box_a is open.` / `box_a is not open.`
    #[default]
    Predicate,
    /// `the detector is on.`
    Value,
    /// `placed: o1, o2.` listing arguments whose value is `true`.
    Set,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ActionDecl {
    pub name: String,
    #[serde(default)]
    pub params: Vec<String>,
    /// Agent cost r^a of executing this action; non-positive.
    #[serde(default)]
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeStatus {
    Known,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CausalRule {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Trigger>,
    #[serde(default)]
    pub preconditions: Vec<Literal>,
    pub effects: Vec<Literal>,
    #[serde(default = "default_probability")]
    pub probability: f64,
    #[serde(default)]
    pub knowledge: KnowledgeStatus,
    /// Cause events for the causal graph. Defaults to the trigger plus the
    /// precondition atoms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub causes: Option<Vec<String>>,
}

/// No admissible world satisfies all of `forbid` at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WorldConstraint {
    pub forbid: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WeightedGoal {
    pub goal: Vec<Literal>,
    pub weight: f64,
}

/// A language template the oracle renders and the agent parses back.
///
/// `cause`/`effect` are event patterns with `{0}`, `{1}` slots bound to
/// object names; `positive`/`negative` are sentences whose slots are filled
/// with display names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MechanismTemplate {
    pub id: String,
    pub cause: String,
    pub effect: String,
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    /// User reward r^u paid on the step that reaches the goal.
    pub goal_reward: f64,
    /// β for oracle queries; non-positive.
    pub oracle_query_cost: f64,
    /// β for agent questions to the user; non-positive.
    pub user_query_cost: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            goal_reward: 1.0,
            oracle_query_cost: -0.5,
            user_query_cost: -0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ObjectSampling {
    /// Only objects of this type are subsampled; others are always present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_type: Option<String>,
    pub count: usize,
}

impl DomainSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(ScoopError::from_json)
    }

    /// Canonical serialization: pretty JSON with sorted maps, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("domain serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_json())?;
        Ok(())
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureDecl> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionDecl> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn rule(&self, id: &str) -> Option<&CausalRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn display_name<'a>(&'a self, object: &'a str) -> &'a str {
        self.display_names
            .get(object)
            .map(String::as_str)
            .unwrap_or(object)
    }

    /// Hypotheses that contain every rule marked known.
    pub fn hypotheses_consistent_with_known(&self) -> Vec<&str> {
        let known: Vec<&str> = self
            .rules
            .iter()
            .filter(|r| r.knowledge == KnowledgeStatus::Known)
            .map(|r| r.id.as_str())
            .collect();
        self.rule_prior
            .keys()
            .filter(|h| {
                let rules = self.hypotheses.get(*h);
                known
                    .iter()
                    .all(|k| rules.is_some_and(|rs| rs.iter().any(|r| r == k)))
            })
            .map(String::as_str)
            .collect()
    }
}

impl CausalRule {
    /// Atoms read by the rule (preconditions and a condition trigger).
    pub fn condition_atoms(&self) -> Vec<&Atom> {
        let mut atoms: Vec<&Atom> = self.preconditions.iter().map(|l| &l.atom).collect();
        if let Some(Trigger::Condition(l)) = &self.trigger {
            atoms.push(&l.atom);
        }
        atoms
    }
}

/// JSON schema for domain files.
pub fn domain_schema_json() -> String {
    let schema = schemars::schema_for!(DomainSpec);
    let mut s = serde_json::to_string_pretty(&schema).expect("schema serializes");
    s.push('\n');
    s
}
