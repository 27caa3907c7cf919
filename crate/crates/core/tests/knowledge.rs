mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use scoop_core::actors::{answer_oracle, OracleQuery};
use scoop_core::domain::{Edge, ProblemInstance};
use scoop_core::knowledge::{
    create_graph, derive_graph, entropy, entropy_of, map_hypothesis, parse_description, update, EdgeStatus,
    Evidence, HypothesisPosterior,
};
use scoop_core::tasks::{gen_blicket, gen_boxes, BlicketLaw};
use scoop_core::ScoopError;

use common::{
    blicket_instance, brute_force_posterior, instance_of, laws, parse_hypothesis, random_evidence,
    readings_of, rng, small_blicket_configs,
};

fn objects(inst: &ProblemInstance) -> Vec<String> {
    inst.objects().keys().cloned().collect()
}

fn place_o1(inst: &ProblemInstance, on: bool) -> Evidence {
    let objs = objects(inst);
    Evidence::InterventionResult {
        action: Some("place(o1)".parse().unwrap()),
        user_action: None,
        pre: readings_of(&objs, &Default::default(), false),
        post: readings_of(&objs, &["o1".to_string()].into(), on),
    }
}

fn blicket_marginal(p: &HypothesisPosterior, object: &str) -> f64 {
    p.iter()
        .filter(|(h, _)| parse_hypothesis(h).1.contains(object))
        .map(|(_, q)| q)
        .sum()
}

#[test]
fn uniform_two_object_prior_leaves_both_edges_open() {
    let inst = blicket_instance(2, &[BlicketLaw::Or], "or[o1]", 0);
    let (graph, posterior) = create_graph(&inst).unwrap();
    assert_eq!(posterior.len(), 4);
    for o in ["o1", "o2"] {
        let b = graph.edges[&Edge::new(format!("placed({o})"), "detector")];
        assert_eq!(b.status, EdgeStatus::Unknown);
        assert!((b.marginal - 0.5).abs() < 1e-12);
    }
    assert_eq!(graph.unknown_edges().count(), 2);
}

#[test]
fn known_rules_are_settled_edges() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let (graph, _) = create_graph(&inst).unwrap();
    assert_eq!(
        graph.status(&Edge::new("take(item_b)", "held(item_b)")),
        Some(EdgeStatus::Confirmed)
    );
    assert_eq!(
        graph.status(&Edge::new("open(box_a)", "accessible(item_b)")),
        Some(EdgeStatus::Unknown)
    );

    let certain = HypothesisPosterior::from_weights(&[("box_a", 1.0)]).unwrap();
    let graph = derive_graph(&certain, &inst.model);
    assert_eq!(graph.unknown_edges().count(), 0);
    assert_eq!(
        graph.status(&Edge::new("open(box_a)", "accessible(item_b)")),
        Some(EdgeStatus::Confirmed)
    );
}

#[test]
fn detector_on_after_placing_o1() {
    let inst = blicket_instance(2, &[BlicketLaw::Or], "or[o1]", 0);
    let prior = HypothesisPosterior::prior(&inst.domain).unwrap();
    let post = update(&prior, place_o1(&inst, true), &inst).unwrap();
    assert!((blicket_marginal(&post, "o1") - 1.0).abs() < 1e-12);
    assert!((blicket_marginal(&post, "o2") - 0.5).abs() < 1e-12);
    assert_eq!(post.evidence_log.len(), 1);
    // exact tie between or[o1] and or[o1,o2]
    assert_eq!(map_hypothesis(&post), "or[o1,o2]");

    let query = OracleQuery::edge(&Edge::new("placed(o2)", "detector"));
    let answer = answer_oracle(&query, &inst, &inst.initial_state);
    let post = update(&post, Evidence::OracleChunk { answer }, &inst).unwrap();
    assert_eq!(post.support, vec!["or[o1]".to_string()]);
    assert_eq!(post.probs, vec![1.0]);
}

#[test]
fn uninformative_evidence_changes_nothing() {
    let inst = blicket_instance(2, &[BlicketLaw::Or], "or[o1]", 0);
    let prior = HypothesisPosterior::prior(&inst.domain).unwrap();
    let idle = Evidence::PassiveObservation {
        readings: readings_of(&objects(&inst), &Default::default(), false),
    };
    let post = update(&prior, idle, &inst).unwrap();
    assert_eq!(post.support, prior.support);
    assert_eq!(post.probs, prior.probs);
}

#[test]
fn impossible_evidence_is_an_error() {
    let inst = blicket_instance(2, &[BlicketLaw::Or], "or[o1]", 0);
    let prior = HypothesisPosterior::from_weights(&[("or[]", 1.0)]).unwrap();
    let err = update(&prior, place_o1(&inst, true), &inst).unwrap_err();
    assert!(matches!(err, ScoopError::EvidenceContradictsPrior));
}

#[test]
fn entropy_examples() {
    let uniform =
        HypothesisPosterior::from_weights(&[("a", 1.0), ("b", 1.0), ("c", 1.0), ("d", 1.0)]).unwrap();
    assert!((entropy(&uniform) - 2.0).abs() < 1e-12);
    let one = HypothesisPosterior::from_weights(&[("a", 1.0)]).unwrap();
    assert_eq!(entropy(&one), 0.0);
    assert!((entropy_of(&[0.5, 0.25, 0.25]) - 1.5).abs() < 1e-12);
    assert_eq!(entropy_of(&[0.0, 1.0]), 0.0);
}

#[test]
fn map_examples() {
    let p = HypothesisPosterior::from_weights(&[("a", 0.7), ("b", 0.3)]).unwrap();
    assert_eq!(map_hypothesis(&p), "a");
    let p = HypothesisPosterior::from_weights(&[("b", 0.5), ("a", 0.5)]).unwrap();
    assert_eq!(map_hypothesis(&p), "a");
    let p = HypothesisPosterior::from_weights(&[("a", 0.2), ("c", 0.4), ("b", 0.4)]).unwrap();
    assert_eq!(map_hypothesis(&p), "b");
}

#[test]
fn edge_marginals_are_weighted_counts() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let e = Edge::new("open(box_a)", "accessible(item_b)");
    for (w, status) in [
        (0.5, EdgeStatus::Unknown),
        (0.75, EdgeStatus::Unknown),
        (1.0, EdgeStatus::Confirmed),
    ] {
        let p = HypothesisPosterior::from_weights(&[("box_a", w), ("loose", 1.0 - w)]).unwrap();
        let b = derive_graph(&p, &inst.model).edges[&e];
        assert!((b.marginal - w).abs() < 1e-12);
        assert_eq!(b.status, status);
    }
    let p = HypothesisPosterior::from_weights(&[("loose", 1.0)]).unwrap();
    assert_eq!(
        derive_graph(&p, &inst.model).status(&e),
        Some(EdgeStatus::Refuted)
    );
}

#[test]
fn mechanism_sentences_parse_back() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let ev = parse_description("box A must be opened before retrieving item B", &inst).unwrap();
    assert_eq!(
        ev,
        Evidence::OracleDescription {
            template: "before".into(),
            args: vec!["box_a".into(), "item_b".into()],
            positive: true,
        }
    );
    let prior = HypothesisPosterior::prior(&inst.domain).unwrap();
    assert_eq!(
        update(&prior, ev, &inst).unwrap().support,
        vec!["box_a".to_string()]
    );

    let neg = parse_description("box A need not be opened before retrieving item B", &inst).unwrap();
    assert_eq!(
        update(&prior, neg, &inst).unwrap().support,
        vec!["loose".to_string()]
    );

    assert!(parse_description("the moon is made of cheese", &inst).is_none());
}

fn fold(prior: &HypothesisPosterior, evidence: &[Evidence], inst: &ProblemInstance) -> HypothesisPosterior {
    evidence
        .iter()
        .fold(prior.clone(), |p, e| update(&p, e.clone(), inst).unwrap())
}

fn as_map(p: &HypothesisPosterior) -> BTreeMap<String, f64> {
    p.iter().map(|(h, q)| (h.to_string(), q)).collect()
}

fn instance_for(config: usize, truth: usize, seed: u64) -> ProblemInstance {
    let configs = small_blicket_configs();
    let (n, law_set) = &configs[config % configs.len()];
    let domain = gen_blicket(*n, &laws(law_set), 0).unwrap();
    let ids: Vec<&String> = domain.rule_prior.keys().collect();
    instance_of(&domain, ids[truth % ids.len()], seed)
}

proptest! {
    #[test]
    fn evidence_order_does_not_matter(config in 0usize..9, truth in 0usize..16, seed in any::<u64>(), len in 1usize..10) {
        let inst = instance_for(config, truth, seed);
        let mut r = rng(seed);
        let run = random_evidence(&inst, len, &mut r);
        let prior = HypothesisPosterior::prior(&inst.domain).unwrap();
        let forward = fold(&prior, &run.evidence, &inst);
        let mut shuffled = run.evidence.clone();
        shuffled.shuffle(&mut r);
        let permuted = fold(&prior, &shuffled, &inst);
        prop_assert_eq!(&forward.support, &permuted.support);
        for (a, b) in forward.probs.iter().zip(&permuted.probs) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let brute = brute_force_posterior(&inst.domain, &run.facts);
        for (h, p) in &brute {
            prop_assert!((forward.prob(h) - p).abs() <= 1e-9, "{} {} vs {}", h, forward.prob(h), p);
        }
    }

    #[test]
    fn chunks_never_grow_the_support(config in 0usize..9, truth in 0usize..16, seed in any::<u64>(), len in 1usize..10) {
        let inst = instance_for(config, truth, seed);
        let run = random_evidence(&inst, len, &mut rng(seed));
        let mut p = HypothesisPosterior::prior(&inst.domain).unwrap();
        for e in run.evidence {
            let is_chunk = matches!(e, Evidence::OracleChunk { .. });
            let next = update(&p, e, &inst).unwrap();
            if is_chunk {
                prop_assert!(next.len() <= p.len());
                prop_assert!(next.support.iter().all(|h| p.support.contains(h)));
            }
            prop_assert!((next.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(next.probs.iter().all(|q| *q > 0.0));
            p = next;
        }
        prop_assert!(p.support.contains(&inst.true_hypothesis));
    }

    #[test]
    fn graph_marginals_match_counts(config in 0usize..9, truth in 0usize..16, seed in any::<u64>(), len in 0usize..6) {
        let inst = instance_for(config, truth, seed);
        let run = random_evidence(&inst, len, &mut rng(seed));
        let p = fold(&HypothesisPosterior::prior(&inst.domain).unwrap(), &run.evidence, &inst);
        let graph = derive_graph(&p, &inst.model);
        let weights = as_map(&p);
        for o in inst.objects().keys() {
            let expected: f64 = weights
                .iter()
                .filter(|(h, _)| parse_hypothesis(h).1.contains(o))
                .map(|(_, q)| q)
                .sum();
            let b = graph.edges[&Edge::new(format!("placed({o})"), "detector")];
            prop_assert!((0.0..=1.0).contains(&b.marginal));
            prop_assert!((b.marginal - expected).abs() <= 1e-9);
            let status = if expected >= 1.0 - 1e-9 {
                EdgeStatus::Confirmed
            } else if expected <= 1e-9 {
                EdgeStatus::Refuted
            } else {
                EdgeStatus::Unknown
            };
            prop_assert_eq!(b.status, status);
        }
    }

    #[test]
    fn map_is_a_maximiser(weights in proptest::collection::vec(0u8..5, 1..8)) {
        let ids: Vec<String> = (0..weights.len()).map(|i| format!("h{i}")).collect();
        let pairs: Vec<(&str, f64)> = ids.iter().map(String::as_str).zip(weights.iter().map(|w| *w as f64)).collect();
        prop_assume!(weights.iter().any(|w| *w > 0));
        let p = HypothesisPosterior::from_weights(&pairs).unwrap();
        let best = pairs.iter().map(|(_, w)| *w).fold(0.0, f64::max);
        let expected = pairs.iter().filter(|(_, w)| *w == best).map(|(h, _)| *h).min().unwrap();
        prop_assert_eq!(map_hypothesis(&p), expected);
    }
}
