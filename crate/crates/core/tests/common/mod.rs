//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's inference, VoI or planning code;
//! blicket semantics are re-derived from hypothesis ids.
#![allow(dead_code)]

pub mod golden;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scoop_core::actors::{answer_oracle, OracleQuery};
use scoop_core::agent::EpisodeOutcome;
use scoop_core::domain::{ground_instance, DomainSpec, Edge, Goal, ProblemInstance};
use scoop_core::env::{AgentAction, Observation, ObservationKind, StepRecord, UserAction};
use scoop_core::harness::{EpisodeTrace, SessionTrace};
use scoop_core::knowledge::Evidence;
use scoop_core::planner::{InducedMdp, Transition};
use scoop_core::tasks::{gen_blicket, BlicketLaw};

pub fn laws(list: &[BlicketLaw]) -> BTreeSet<BlicketLaw> {
    list.iter().copied().collect()
}

/// A blicket domain grounded over all of its objects with a chosen truth.
pub fn blicket_instance(n: usize, law_set: &[BlicketLaw], truth: &str, seed: u64) -> ProblemInstance {
    let domain = gen_blicket(n, &laws(law_set), seed).unwrap();
    instance_of(&domain, truth, seed)
}

pub fn instance_of(domain: &DomainSpec, truth: &str, seed: u64) -> ProblemInstance {
    let objects: BTreeMap<String, String> = domain.objects.clone();
    let goal = Goal(domain.goals[0].goal.clone());
    ground_instance(domain, &objects, truth, &goal, seed).unwrap()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Law {
    Or,
    And,
}

/// `or[o1,o2]` -> (Or, {o1, o2}).
pub fn parse_hypothesis(id: &str) -> (Law, BTreeSet<String>) {
    let (law, rest) = id.split_once('[').expect("blicket id");
    let law = match law {
        "or" => Law::Or,
        "and" => Law::And,
        other => panic!("unknown law {other}"),
    };
    let inner = rest.strip_suffix(']').expect("closing bracket");
    let set = inner
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    (law, set)
}

pub fn detector_on(hypothesis: &str, placed: &BTreeSet<String>) -> bool {
    let (law, set) = parse_hypothesis(hypothesis);
    match law {
        Law::Or => set.iter().any(|o| placed.contains(o)),
        Law::And => !set.is_empty() && set.is_subset(placed),
    }
}

pub fn readings_of(
    objects: &[String],
    placed: &BTreeSet<String>,
    detector: bool,
) -> BTreeMap<String, String> {
    let mut r: BTreeMap<String, String> = objects
        .iter()
        .map(|o| (format!("placed({o})"), placed.contains(o).to_string()))
        .collect();
    r.insert("detector".into(), if detector { "on" } else { "off" }.into());
    r
}

pub fn entropy_bits(probs: &[f64]) -> f64 {
    probs.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum()
}

/// Prior weights straight from the domain file.
pub fn prior_weights(domain: &DomainSpec) -> BTreeMap<String, f64> {
    let z: f64 = domain.rule_prior.values().sum();
    domain
        .rule_prior
        .iter()
        .map(|(h, w)| (h.clone(), w / z))
        .collect()
}

/// A blicket fact in a form the reference likelihood understands.
#[derive(Debug, Clone)]
pub enum Fact {
    /// Detector reading after acting on `placed`.
    Detector { placed: BTreeSet<String>, on: bool },
    /// The oracle said `object` does / does not drive the detector.
    Chunk { object: String, causes: bool },
}

pub fn fact_likelihood(fact: &Fact, hypothesis: &str) -> f64 {
    match fact {
        Fact::Detector { placed, on } => (detector_on(hypothesis, placed) == *on) as u8 as f64,
        Fact::Chunk { object, causes } => {
            let (_, set) = parse_hypothesis(hypothesis);
            (set.contains(object) == *causes) as u8 as f64
        }
    }
}

/// Single-pass posterior: prior times the product of all likelihoods.
pub fn brute_force_posterior(domain: &DomainSpec, facts: &[Fact]) -> BTreeMap<String, f64> {
    let mut w: BTreeMap<String, f64> = prior_weights(domain)
        .into_iter()
        .map(|(h, p)| {
            let l: f64 = facts.iter().map(|f| fact_likelihood(f, &h)).product();
            (h, p * l)
        })
        .collect();
    let z: f64 = w.values().sum();
    w.values_mut().for_each(|p| *p /= z);
    w
}

/// Expected entropy reduction of a probe whose outcome is a deterministic
/// function of the hypothesis.
pub fn partition_gain<K: Ord>(posterior: &BTreeMap<String, f64>, outcome: impl Fn(&str) -> K) -> f64 {
    let probs: Vec<f64> = posterior.values().copied().collect();
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (h, p) in posterior {
        if *p > 0.0 {
            groups.entry(outcome(h)).or_default().push(*p);
        }
    }
    let after: f64 = groups
        .values()
        .map(|g| {
            let pk: f64 = g.iter().sum();
            let cond: Vec<f64> = g.iter().map(|p| p / pk).collect();
            pk * entropy_bits(&cond)
        })
        .sum();
    entropy_bits(&probs) - after
}

/// One random evidence sequence, generated from the instance's true rules.
pub struct EvidenceRun {
    pub evidence: Vec<Evidence>,
    pub facts: Vec<Fact>,
    /// Placement before each evidence item and after the last.
    pub placements: Vec<BTreeSet<String>>,
}

pub fn random_evidence(instance: &ProblemInstance, len: usize, rng: &mut ChaCha8Rng) -> EvidenceRun {
    let objects: Vec<String> = instance.objects().keys().cloned().collect();
    let truth = instance.true_hypothesis.clone();
    let mut placed: BTreeSet<String> = objects.iter().filter(|_| rng.random_bool(0.3)).cloned().collect();
    let mut out = EvidenceRun {
        evidence: Vec::new(),
        facts: Vec::new(),
        placements: Vec::new(),
    };
    for _ in 0..len {
        out.placements.push(placed.clone());
        let o = objects.choose(rng).unwrap().clone();
        let roll: f64 = rng.random();
        if roll < 0.7 {
            let pre = readings_of(&objects, &placed, detector_on(&truth, &placed));
            let name = if placed.contains(&o) { "remove" } else { "place" };
            if name == "remove" {
                placed.remove(&o);
            } else {
                placed.insert(o.clone());
            }
            let on = detector_on(&truth, &placed);
            out.evidence.push(Evidence::InterventionResult {
                action: Some(format!("{name}({o})").parse().unwrap()),
                user_action: None,
                pre,
                post: readings_of(&objects, &placed, on),
            });
            out.facts.push(Fact::Detector {
                placed: placed.clone(),
                on,
            });
        } else if roll < 0.85 {
            let on = detector_on(&truth, &placed);
            out.evidence.push(Evidence::PassiveObservation {
                readings: readings_of(&objects, &placed, on),
            });
            out.facts.push(Fact::Detector {
                placed: placed.clone(),
                on,
            });
        } else {
            let query = OracleQuery::edge(&Edge::new(format!("placed({o})"), "detector"));
            let answer = answer_oracle(&query, instance, &instance.initial_state);
            let (_, set) = parse_hypothesis(&truth);
            out.evidence.push(Evidence::OracleChunk { answer });
            out.facts.push(Fact::Chunk {
                causes: set.contains(&o),
                object: o,
            });
        }
    }
    out.placements.push(placed);
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Blicket domains with at most 16 hypotheses.
pub fn small_blicket_configs() -> Vec<(usize, Vec<BlicketLaw>)> {
    use BlicketLaw::*;
    vec![
        (1, vec![Or]),
        (2, vec![Or]),
        (3, vec![Or]),
        (4, vec![Or]),
        (2, vec![And]),
        (3, vec![And]),
        (1, vec![Or, And]),
        (2, vec![Or, And]),
        (3, vec![Or, And]),
    ]
}

/// Σ_θ Σ_t γ^(global step) (r^u + r^a + β), with a running step counter.
pub fn naive_objective(gamma: f64, episodes: &[Vec<(f64, f64, f64)>]) -> f64 {
    let mut clock = 0u64;
    let mut total = 0.0;
    for e in episodes {
        for (ru, ra, b) in e {
            total += gamma.powf(clock as f64) * (ru + ra + b);
            clock += 1;
        }
    }
    total
}

pub fn record(ru: f64, ra: f64, beta: f64, t: u32) -> StepRecord {
    StepRecord {
        t,
        state_digest: String::new(),
        agent_action: AgentAction::NoOp,
        user_action: UserAction::NoOp,
        obs: Observation {
            step_index: t + 1,
            kind: ObservationKind::EnvSignal {
                readings: BTreeMap::new(),
            },
        },
        r_u: ru,
        r_a: ra,
        beta,
        iteration: 0,
    }
}

/// Synthetic session from (r_u, r_a, β) triples.
pub fn session_of(gamma: f64, episodes: &[Vec<(f64, f64, f64)>]) -> SessionTrace {
    let mut s = SessionTrace::new("test", "random", 0, gamma);
    for (i, e) in episodes.iter().enumerate() {
        s.episodes.push(EpisodeTrace {
            instance_id: format!("inst-{i}"),
            true_hypothesis: String::new(),
            steps: e
                .iter()
                .enumerate()
                .map(|(t, (ru, ra, b))| record(*ru, *ra, *b, t as u32))
                .collect(),
            outcome: EpisodeOutcome::Answered {
                answer: String::new(),
            },
            events: Vec::new(),
        });
    }
    s
}

/// A small random MDP: `p[s][a]` lists (next, prob, reward).
#[derive(Debug, Clone)]
pub struct TinyMdp {
    pub p: Vec<Vec<Vec<(usize, f64, f64)>>>,
    pub goal: Vec<bool>,
    pub gamma: f64,
    pub horizon: Option<u32>,
}

pub fn random_mdp(rng: &mut ChaCha8Rng, finite: bool) -> TinyMdp {
    let n = rng.random_range(1..=6usize);
    let m = rng.random_range(1..=3usize);
    let goal: Vec<bool> = (0..n).map(|s| s > 0 && rng.random_bool(0.2)).collect();
    let mut p = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<Vec<(usize, f64, f64)>> = Vec::with_capacity(m);
        for a in 0..m {
            // duplicate an earlier action now and then so ties are exact
            if a > 0 && rng.random_bool(0.2) {
                let copy = row[rng.random_range(0..a)].clone();
                row.push(copy);
                continue;
            }
            let k = rng.random_range(1..=2usize.min(n));
            let mut nexts: Vec<usize> = (0..n).collect();
            nexts.sort_by_key(|_| rng.random::<u32>());
            nexts.truncate(k);
            let quarters = if k == 1 {
                vec![4]
            } else {
                let q = rng.random_range(1..=3);
                vec![q, 4 - q]
            };
            row.push(
                nexts
                    .into_iter()
                    .zip(quarters)
                    .map(|(s2, q)| (s2, q as f64 / 4.0, rng.random_range(-4..=4) as f64 / 2.0))
                    .collect(),
            );
        }
        p.push(row);
    }
    TinyMdp {
        p,
        goal,
        gamma: if finite {
            [0.9, 1.0][rng.random_range(0..2)]
        } else {
            [0.5, 0.8, 0.9][rng.random_range(0..3)]
        },
        horizon: finite.then(|| rng.random_range(1..=6)),
    }
}

impl TinyMdp {
    pub fn to_induced(&self) -> InducedMdp {
        let m = self;
        let labels: Vec<String> = (0..m.p[0].len()).map(|a| format!("a{a}")).collect();
        let transitions =
            m.p.iter()
                .map(|row| {
                    row.iter()
                        .map(|dist| {
                            dist.iter()
                                .map(|(next, prob, reward)| Transition {
                                    next: *next,
                                    prob: *prob,
                                    reward: *reward,
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
        InducedMdp::from_parts(labels, transitions, m.goal.clone(), m.gamma, m.horizon).unwrap()
    }
}

/// Exhaustive expectimax over the full decision tree: the optimal value
/// with `k` steps to go and every first action that attains it.
pub fn tree_search(mdp: &TinyMdp, s: usize, k: u32) -> (f64, Vec<usize>) {
    if mdp.goal[s] || k == 0 {
        return (0.0, Vec::new());
    }
    let qs: Vec<f64> = mdp.p[s]
        .iter()
        .map(|dist| {
            dist.iter()
                .map(|(s2, pr, r)| pr * (r + mdp.gamma * tree_search(mdp, *s2, k - 1).0))
                .sum()
        })
        .collect();
    let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let argmax = (0..qs.len()).filter(|a| qs[*a] >= best - 1e-9).collect();
    (best, argmax)
}
