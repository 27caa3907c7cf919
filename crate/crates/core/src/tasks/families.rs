use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ground_instance, validate_domain, ActionDecl, ActionTerm, Atom, CausalRule, DomainSpec, FeatureDecl,
    Goal, KnowledgeStatus, Literal, MechanismTemplate, ObjectSampling, ProblemInstance, RenderStyle,
    RewardSpec, SessionSpec, Trigger, WeightedGoal,
};
use crate::error::{Result, ScoopError};
use crate::knowledge::Evidence;

pub const MAX_BLICKET_OBJECTS: usize = 6;
pub const MAX_BOXES: usize = 4;

const COLORS: [&str; 6] = ["red", "blue", "green", "yellow", "purple", "orange"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlicketLaw {
    Or,
    And,
}

impl fmt::Display for BlicketLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlicketLaw::Or => write!(f, "or"),
            BlicketLaw::And => write!(f, "and"),
        }
    }
}

impl FromStr for BlicketLaw {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "or" => Ok(BlicketLaw::Or),
            "and" => Ok(BlicketLaw::And),
            _ => Err(ScoopError::syntax("law", s, "expected OR or AND")),
        }
    }
}

/// Closed form: 2^n subsets under OR, 2^n - 1 non-empty ones under AND.
pub fn blicket_hypothesis_count(n_objects: usize, laws: &BTreeSet<BlicketLaw>) -> usize {
    let subsets = 1usize << n_objects;
    laws.iter()
        .map(|l| match l {
            BlicketLaw::Or => subsets,
            BlicketLaw::And => subsets - 1,
        })
        .sum()
}

/// Knobs shared by the blicket-style families.
#[derive(Debug, Clone, Copy)]
struct BlicketCosts {
    place: f64,
    goal_reward: f64,
    oracle: f64,
    gamma: f64,
    max_steps: u32,
}

impl Default for BlicketCosts {
    fn default() -> Self {
        BlicketCosts {
            place: -0.2,
            goal_reward: 1.0,
            oracle: -0.5,
            gamma: 0.95,
            max_steps: 20,
        }
    }
}

fn object_name(i: usize) -> String {
    format!("o{}", i + 1)
}

fn lit(feature: &str, args: &[&str], value: &str) -> Literal {
    Literal::new(Atom::new(feature, args), value)
}

fn subsets(objects: &[String]) -> Vec<Vec<String>> {
    (0u32..(1 << objects.len()))
        .map(|mask| {
            objects
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, o)| o.clone())
                .collect()
        })
        .collect()
}

fn blicket_domain(
    n_objects: usize,
    laws: &BTreeSet<BlicketLaw>,
    seed: u64,
    costs: BlicketCosts,
    include_empty_or: bool,
) -> Result<DomainSpec> {
    if !(1..=MAX_BLICKET_OBJECTS).contains(&n_objects) {
        return Err(ScoopError::OutOfRange(format!(
            "n_objects must lie in 1..={MAX_BLICKET_OBJECTS}, got {n_objects}"
        )));
    }
    if laws.is_empty() {
        return Err(ScoopError::OutOfRange("at least one law is required".into()));
    }
    let objects: Vec<String> = (0..n_objects).map(object_name).collect();
    let mut colors: Vec<&str> = COLORS.to_vec();
    colors.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let display_names = objects
        .iter()
        .zip(&colors)
        .map(|(o, c)| (o.clone(), format!("the {c} block")))
        .collect();

    let mut rules = vec![
        CausalRule {
            id: "place".into(),
            trigger: Some(Trigger::Action(ActionTerm::new("place", &["?o"]))),
            preconditions: vec![],
            effects: vec![lit("placed", &["?o"], "true")],
            probability: 1.0,
            knowledge: KnowledgeStatus::Known,
            causes: None,
        },
        CausalRule {
            id: "remove".into(),
            trigger: Some(Trigger::Action(ActionTerm::new("remove", &["?o"]))),
            preconditions: vec![],
            effects: vec![lit("placed", &["?o"], "false")],
            probability: 1.0,
            knowledge: KnowledgeStatus::Known,
            causes: None,
        },
    ];
    let mut hypotheses = BTreeMap::new();
    let known = ["place".to_string(), "remove".to_string()];
    if laws.contains(&BlicketLaw::Or) {
        for o in &objects {
            rules.push(CausalRule {
                id: format!("or_{o}"),
                trigger: Some(Trigger::Condition(lit("placed", &[o], "true"))),
                preconditions: vec![],
                effects: vec![lit("detector", &[], "on")],
                probability: 1.0,
                knowledge: KnowledgeStatus::Unknown,
                causes: None,
            });
        }
        for set in subsets(&objects) {
            if set.is_empty() && !include_empty_or {
                continue;
            }
            let mut ids: Vec<String> = known.to_vec();
            ids.extend(set.iter().map(|o| format!("or_{o}")));
            hypotheses.insert(format!("or[{}]", set.join(",")), ids);
        }
    }
    if laws.contains(&BlicketLaw::And) {
        for set in subsets(&objects).into_iter().filter(|s| !s.is_empty()) {
            let id = format!("and_{}", set.join("_"));
            rules.push(CausalRule {
                id: id.clone(),
                trigger: None,
                preconditions: set.iter().map(|o| lit("placed", &[o], "true")).collect(),
                effects: vec![lit("detector", &[], "on")],
                probability: 1.0,
                knowledge: KnowledgeStatus::Unknown,
                causes: None,
            });
            let mut ids: Vec<String> = known.to_vec();
            ids.push(id);
            hypotheses.insert(format!("and[{}]", set.join(",")), ids);
        }
    }
    let p = 1.0 / hypotheses.len() as f64;
    let rule_prior = hypotheses.keys().map(|h| (h.clone(), p)).collect();
    let law_tag: Vec<String> = laws.iter().map(|l| l.to_string()).collect();

    Ok(DomainSpec {
        name: format!("blicket-n{n_objects}-{}-s{seed}", law_tag.join("+")),
        object_types: BTreeSet::from(["Object".to_string()]),
        objects: objects
            .iter()
            .map(|o| (o.clone(), "Object".to_string()))
            .collect(),
        display_names,
        features: vec![
            FeatureDecl {
                name: "placed".into(),
                args: vec!["Object".into()],
                values: vec!["false".into(), "true".into()],
                default: "false".into(),
                observable: true,
                derived: false,
                render: RenderStyle::Set,
            },
            FeatureDecl {
                name: "detector".into(),
                args: vec![],
                values: vec!["off".into(), "on".into()],
                default: "off".into(),
                observable: true,
                derived: true,
                render: RenderStyle::Value,
            },
        ],
        actions: vec![
            ActionDecl {
                name: "place".into(),
                params: vec!["Object".into()],
                cost: costs.place,
            },
            ActionDecl {
                name: "remove".into(),
                params: vec!["Object".into()],
                cost: costs.place,
            },
        ],
        rules,
        hypotheses,
        rule_prior,
        world_constraints: vec![],
        initial: BTreeMap::new(),
        goals: vec![WeightedGoal {
            goal: vec![lit("detector", &[], "on")],
            weight: 1.0,
        }],
        templates: vec![],
        persistent_rules: false,
        rewards: RewardSpec {
            goal_reward: costs.goal_reward,
            oracle_query_cost: costs.oracle,
            user_query_cost: 0.0,
        },
        gamma: costs.gamma,
        max_steps: costs.max_steps,
        sampling: None,
    })
}

/// Blicket detector over `n_objects` objects. Hypotheses pair a blicket
/// subset with a law; under AND the detector needs the whole (non-empty)
/// subset placed.
pub fn gen_blicket(n_objects: usize, laws: &BTreeSet<BlicketLaw>, seed: u64) -> Result<DomainSpec> {
    blicket_domain(n_objects, laws, seed, BlicketCosts::default(), true)
}

/// A confounded blicket task: three objects, both laws, and an opening
/// observation in which `o1` and `o2` sit on the detector together and it
/// is on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundedTask {
    pub domain: DomainSpec,
    pub prefix: Vec<Evidence>,
    /// Drawn from the hypotheses the prefix leaves standing.
    pub true_hypothesis: String,
    pub seed: u64,
}

impl ConfoundedTask {
    pub fn instance(&self) -> Result<ProblemInstance> {
        let goal = Goal(vec![lit("detector", &[], "on")]);
        ground_instance(
            &self.domain,
            &self.domain.objects,
            &self.true_hypothesis,
            &goal,
            self.seed,
        )
    }
}

pub fn gen_confounded(seed: u64) -> Result<ConfoundedTask> {
    let laws = BTreeSet::from([BlicketLaw::Or, BlicketLaw::And]);
    let costs = BlicketCosts {
        place: -0.1,
        ..BlicketCosts::default()
    };
    let mut domain = blicket_domain(3, &laws, seed, costs, true)?;
    domain.name = format!("confounded-s{seed}");
    let readings: BTreeMap<String, String> = [
        ("detector", "on"),
        ("placed(o1)", "true"),
        ("placed(o2)", "true"),
        ("placed(o3)", "false"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let survivors: Vec<&String> = domain
        .hypotheses
        .keys()
        .filter(|h| {
            let (law, set) = h.split_once('[').expect("generated ids have a bracket");
            let set = set.trim_end_matches(']');
            let members: Vec<&str> = set.split(',').filter(|s| !s.is_empty()).collect();
            match law {
                "or" => members.iter().any(|m| *m == "o1" || *m == "o2"),
                _ => members.iter().all(|m| *m == "o1" || *m == "o2"),
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let true_hypothesis = survivors
        .choose(&mut rng)
        .map(|h| (*h).clone())
        .expect("survivors are non-empty");
    Ok(ConfoundedTask {
        domain,
        prefix: vec![Evidence::PassiveObservation { readings }],
        true_hypothesis,
        seed,
    })
}

const BLICKET_RATE: f64 = 0.25;

/// A persistent-rule blicket session: four candidate objects under the OR
/// law, two sampled per instance, querying priced at `oracle_cost`. At
/// least one object is a blicket.
pub fn gen_explore_exploit(instance_count: usize, oracle_cost: f64, seed: u64) -> Result<SessionSpec> {
    if instance_count < 2 {
        return Err(ScoopError::OutOfRange("instance_count must be at least 2".into()));
    }
    if !(oracle_cost.is_finite() && oracle_cost >= 0.0) {
        return Err(ScoopError::OutOfRange("oracle_cost must be non-negative".into()));
    }
    let costs = BlicketCosts {
        place: -1.0,
        goal_reward: 5.0,
        oracle: -oracle_cost,
        gamma: 0.95,
        max_steps: 12,
    };
    let mut domain = blicket_domain(4, &BTreeSet::from([BlicketLaw::Or]), seed, costs, false)?;
    domain.name = format!("explore-exploit-k{instance_count}-s{seed}");
    domain.persistent_rules = true;
    // blickets are sparse: each object is one with probability BLICKET_RATE
    let weights: Vec<(String, f64)> = domain
        .hypotheses
        .iter()
        .map(|(h, rules)| {
            let k = rules.iter().filter(|r| r.starts_with("or_")).count() as i32;
            (h.clone(), BLICKET_RATE.powi(k) * (1.0 - BLICKET_RATE).powi(4 - k))
        })
        .collect();
    let z: f64 = weights.iter().map(|(_, w)| w).sum();
    domain.rule_prior = weights.into_iter().map(|(h, w)| (h, w / z)).collect();
    domain.sampling = Some(ObjectSampling {
        object_type: Some("Object".into()),
        count: 2,
    });
    let spec = SessionSpec {
        domain,
        instance_count,
        seed,
        shared_gamma: costs.gamma,
    };
    Ok(spec)
}

fn box_name(i: usize) -> String {
    format!("box_{}", (b'a' + i as u8) as char)
}

/// Nested containers holding `item_b`. Hypotheses pair the container (or
/// none) with the opening order: under `chained` a box opens only after the
/// previous one. The layout is fixed; `seed` only tags the name.
pub fn gen_boxes(n_boxes: usize, seed: u64) -> Result<DomainSpec> {
    if !(1..=MAX_BOXES).contains(&n_boxes) {
        return Err(ScoopError::OutOfRange(format!(
            "n_boxes must lie in 1..={MAX_BOXES}, got {n_boxes}"
        )));
    }
    let boxes: Vec<String> = (0..n_boxes).map(box_name).collect();
    let item = "item_b".to_string();
    let mut objects: BTreeMap<String, String> =
        boxes.iter().map(|b| (b.clone(), "Box".to_string())).collect();
    objects.insert(item.clone(), "Item".into());
    let mut display_names: BTreeMap<String, String> = boxes
        .iter()
        .map(|b| (b.clone(), format!("box {}", b[4..].to_ascii_uppercase())))
        .collect();
    display_names.insert(item.clone(), "item B".into());

    let open_rule = |id: String, b: &str, after: Option<&str>, known| CausalRule {
        id,
        trigger: Some(Trigger::Action(ActionTerm::new("open", &[b]))),
        preconditions: after.map(|p| vec![lit("open", &[p], "true")]).unwrap_or_default(),
        effects: vec![lit("open", &[b], "true")],
        probability: 1.0,
        knowledge: known,
        causes: None,
    };
    let mut rules = vec![
        open_rule(
            format!("open_{}", boxes[0]),
            &boxes[0],
            None,
            KnowledgeStatus::Known,
        ),
        CausalRule {
            id: "take".into(),
            trigger: Some(Trigger::Action(ActionTerm::new("take", &["?i"]))),
            preconditions: vec![lit("accessible", &["?i"], "true")],
            effects: vec![lit("held", &["?i"], "true")],
            probability: 1.0,
            knowledge: KnowledgeStatus::Known,
            causes: None,
        },
        CausalRule {
            id: "loose".into(),
            trigger: None,
            preconditions: vec![],
            effects: vec![lit("accessible", &[&item], "true")],
            probability: 1.0,
            knowledge: KnowledgeStatus::Unknown,
            causes: None,
        },
    ];
    for (k, b) in boxes.iter().enumerate().skip(1) {
        rules.push(open_rule(
            format!("open_free_{b}"),
            b,
            None,
            KnowledgeStatus::Unknown,
        ));
        rules.push(open_rule(
            format!("open_chain_{b}"),
            b,
            Some(&boxes[k - 1]),
            KnowledgeStatus::Unknown,
        ));
    }
    for b in &boxes {
        rules.push(CausalRule {
            id: format!("access_{b}"),
            trigger: Some(Trigger::Condition(lit("open", &[b], "true"))),
            preconditions: vec![],
            effects: vec![lit("accessible", &[&item], "true")],
            probability: 1.0,
            knowledge: KnowledgeStatus::Unknown,
            causes: None,
        });
    }

    let orders: &[&str] = if n_boxes > 1 {
        &["free", "chained"]
    } else {
        &["free"]
    };
    let mut hypotheses = BTreeMap::new();
    for order in orders {
        let mut common = vec![format!("open_{}", boxes[0]), "take".to_string()];
        let prefix = if *order == "free" {
            "open_free"
        } else {
            "open_chain"
        };
        for b in boxes.iter().skip(1) {
            common.push(format!("{prefix}_{b}"));
        }
        let containers = boxes.iter().map(Some).chain(std::iter::once(None));
        for c in containers {
            let mut ids = common.clone();
            ids.push(match c {
                Some(b) => format!("access_{b}"),
                None => "loose".into(),
            });
            let place = c.map(String::as_str).unwrap_or("loose");
            let id = if n_boxes > 1 {
                format!("{order}/{place}")
            } else {
                place.to_string()
            };
            hypotheses.insert(id, ids);
        }
    }
    let p = 1.0 / hypotheses.len() as f64;
    let rule_prior = hypotheses.keys().map(|h| (h.clone(), p)).collect();

    let domain = DomainSpec {
        name: format!("boxes-n{n_boxes}-s{seed}"),
        object_types: BTreeSet::from(["Box".to_string(), "Item".to_string()]),
        objects,
        display_names,
        features: vec![
            FeatureDecl {
                name: "open".into(),
                args: vec!["Box".into()],
                values: vec!["false".into(), "true".into()],
                default: "false".into(),
                observable: true,
                derived: false,
                render: RenderStyle::Predicate,
            },
            FeatureDecl {
                name: "accessible".into(),
                args: vec!["Item".into()],
                values: vec!["false".into(), "true".into()],
                default: "false".into(),
                observable: true,
                derived: true,
                render: RenderStyle::Predicate,
            },
            FeatureDecl {
                name: "held".into(),
                args: vec!["Item".into()],
                values: vec!["false".into(), "true".into()],
                default: "false".into(),
                observable: true,
                derived: false,
                render: RenderStyle::Predicate,
            },
        ],
        actions: vec![
            ActionDecl {
                name: "open".into(),
                params: vec!["Box".into()],
                cost: -0.1,
            },
            ActionDecl {
                name: "take".into(),
                params: vec!["Item".into()],
                cost: -0.1,
            },
        ],
        rules,
        hypotheses,
        rule_prior,
        world_constraints: vec![],
        initial: BTreeMap::new(),
        goals: vec![WeightedGoal {
            goal: vec![lit("held", &[&item], "true")],
            weight: 1.0,
        }],
        templates: vec![MechanismTemplate {
            id: "before".into(),
            cause: "open({0})".into(),
            effect: "accessible({1})".into(),
            positive: "{0} must be opened before retrieving {1}".into(),
            negative: "{0} need not be opened before retrieving {1}".into(),
        }],
        persistent_rules: false,
        rewards: RewardSpec {
            goal_reward: 1.0,
            oracle_query_cost: -0.5,
            user_query_cost: 0.0,
        },
        gamma: 0.95,
        max_steps: 20,
        sampling: None,
    };
    let report = validate_domain(&domain);
    if !report.is_ok() {
        return Err(ScoopError::Invalid(report.violations));
    }
    Ok(domain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    Blicket,
    Confounded,
    ExploreExploit,
    Boxes,
    EpistemicBattery,
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskFamily::Blicket => "blicket",
            TaskFamily::Confounded => "confounded",
            TaskFamily::ExploreExploit => "explore_exploit",
            TaskFamily::Boxes => "boxes",
            TaskFamily::EpistemicBattery => "epistemic_battery",
        };
        write!(f, "{s}")
    }
}

impl FromStr for TaskFamily {
    type Err = ScoopError;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "blicket" => Ok(TaskFamily::Blicket),
            "confounded" => Ok(TaskFamily::Confounded),
            "explore_exploit" => Ok(TaskFamily::ExploreExploit),
            "boxes" => Ok(TaskFamily::Boxes),
            "epistemic_battery" => Ok(TaskFamily::EpistemicBattery),
            _ => Err(ScoopError::syntax(
                "family",
                s,
                "expected blicket, confounded, explore_exploit, boxes or epistemic_battery",
            )),
        }
    }
}

/// Family plus size parameters; unset sizes take the family defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFamilySpec {
    pub family: TaskFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_objects: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laws: Option<BTreeSet<BlicketLaw>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_boxes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_cost: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl TaskFamilySpec {
    pub fn new(family: TaskFamily, seed: u64) -> Self {
        TaskFamilySpec {
            family,
            n_objects: None,
            laws: None,
            n_boxes: None,
            instance_count: None,
            oracle_cost: None,
            seed,
        }
    }

    /// A session over the family's domain. Single-domain families run one
    /// instance per session unless `instance_count` says otherwise.
    pub fn session(&self) -> Result<SessionSpec> {
        let count = self.instance_count.unwrap_or(1);
        let single = |domain: DomainSpec| SessionSpec {
            shared_gamma: domain.gamma,
            domain,
            instance_count: count,
            seed: self.seed,
        };
        match self.family {
            TaskFamily::Blicket => {
                let laws = self
                    .laws
                    .clone()
                    .unwrap_or_else(|| BTreeSet::from([BlicketLaw::Or]));
                gen_blicket(self.n_objects.unwrap_or(2), &laws, self.seed).map(single)
            }
            TaskFamily::Boxes => gen_boxes(self.n_boxes.unwrap_or(1), self.seed).map(single),
            TaskFamily::Confounded => gen_confounded(self.seed).map(|t| single(t.domain)),
            TaskFamily::ExploreExploit => gen_explore_exploit(
                self.instance_count.unwrap_or(5),
                self.oracle_cost.unwrap_or(0.5),
                self.seed,
            ),
            TaskFamily::EpistemicBattery => Err(ScoopError::OutOfRange(
                "the epistemic battery is scored directly, not run as a session".into(),
            )),
        }
    }
}
