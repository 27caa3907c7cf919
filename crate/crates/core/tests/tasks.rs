mod common;

use std::collections::{BTreeMap, BTreeSet};

use scoop_core::domain::{sample_session, validate_domain, DomainSpec};
use scoop_core::knowledge::{update, HypothesisPosterior};
use scoop_core::refinement::AgentConfig;
use scoop_core::tasks::{
    blicket_hypothesis_count, gen_blicket, gen_boxes, gen_confounded, gen_epistemic_battery,
    gen_explore_exploit, score_battery_item, BatteryProbe, BatteryResponse, BlicketLaw, TaskFamily,
    TaskFamilySpec,
};
use scoop_core::ScoopError;

use common::{detector_on, laws, parse_hypothesis, Law};

fn all_law_sets() -> Vec<Vec<BlicketLaw>> {
    vec![
        vec![BlicketLaw::Or],
        vec![BlicketLaw::And],
        vec![BlicketLaw::Or, BlicketLaw::And],
    ]
}

/// Distinct ids by enumeration: any subset under OR, non-empty subsets
/// under AND.
fn enumerated_ids(n: usize, set: &[BlicketLaw]) -> BTreeSet<String> {
    let objects: Vec<String> = (1..=n).map(|i| format!("o{i}")).collect();
    let mut ids = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        let members: Vec<&str> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| objects[i].as_str())
            .collect();
        for law in set {
            match law {
                BlicketLaw::Or => ids.insert(format!("or[{}]", members.join(","))),
                BlicketLaw::And if !members.is_empty() => ids.insert(format!("and[{}]", members.join(","))),
                BlicketLaw::And => false,
            };
        }
    }
    ids
}

#[test]
fn two_object_hypothesis_counts() {
    assert_eq!(blicket_hypothesis_count(2, &laws(&[BlicketLaw::Or])), 4);
    assert_eq!(
        blicket_hypothesis_count(2, &laws(&[BlicketLaw::Or, BlicketLaw::And])),
        7
    );
}

#[test]
fn blicket_hypotheses_are_every_subset() {
    for n in 1..=6 {
        for set in all_law_sets() {
            let d = gen_blicket(n, &laws(&set), 0).unwrap();
            let ids: BTreeSet<String> = d.rule_prior.keys().cloned().collect();
            assert_eq!(ids, enumerated_ids(n, &set), "n = {n}, {set:?}");
            assert_eq!(blicket_hypothesis_count(n, &laws(&set)), ids.len());
            let mass: f64 = d.rule_prior.values().sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn sizes_out_of_range_are_rejected() {
    let or = laws(&[BlicketLaw::Or]);
    assert!(matches!(gen_blicket(0, &or, 0), Err(ScoopError::OutOfRange(_))));
    assert!(matches!(gen_blicket(7, &or, 0), Err(ScoopError::OutOfRange(_))));
    assert!(gen_blicket(2, &BTreeSet::new(), 0).is_err());
    assert!(matches!(gen_boxes(0, 0), Err(ScoopError::OutOfRange(_))));
    assert!(matches!(gen_boxes(5, 0), Err(ScoopError::OutOfRange(_))));
    assert!(matches!(
        gen_explore_exploit(1, 0.5, 0),
        Err(ScoopError::OutOfRange(_))
    ));
    assert!(gen_explore_exploit(3, -0.5, 0).is_err());
    assert!(gen_explore_exploit(3, f64::NAN, 0).is_err());
}

#[test]
fn boxes_hypotheses_pair_container_and_order() {
    let one: Vec<String> = gen_boxes(1, 0).unwrap().rule_prior.into_keys().collect();
    assert_eq!(one, ["box_a", "loose"]);
    let two = gen_boxes(2, 0).unwrap();
    let mut expected = BTreeSet::new();
    for order in ["free", "chained"] {
        for place in ["box_a", "box_b", "loose"] {
            expected.insert(format!("{order}/{place}"));
        }
    }
    assert_eq!(two.rule_prior.keys().cloned().collect::<BTreeSet<_>>(), expected);
    assert_eq!(gen_boxes(1, 0).unwrap().display_names["item_b"], "item B");
}

fn every_generated_domain() -> Vec<DomainSpec> {
    let mut out = Vec::new();
    for seed in [0, 9] {
        for n in 1..=6 {
            for set in all_law_sets() {
                out.push(gen_blicket(n, &laws(&set), seed).unwrap());
            }
        }
        for n in 1..=4 {
            out.push(gen_boxes(n, seed).unwrap());
        }
        out.push(gen_confounded(seed).unwrap().domain);
        out.push(gen_explore_exploit(3, 0.5, seed).unwrap().domain);
        out.extend(gen_epistemic_battery(seed).unwrap().into_iter().map(|i| i.domain));
    }
    out
}

#[test]
fn generated_domains_validate() {
    for d in every_generated_domain() {
        let report = validate_domain(&d);
        assert!(report.is_ok(), "{}: {:?}", d.name, report.violations);
    }
}

#[test]
fn generators_are_deterministic() {
    let a: Vec<String> = every_generated_domain()
        .iter()
        .map(DomainSpec::to_canonical_json)
        .collect();
    let b: Vec<String> = every_generated_domain()
        .iter()
        .map(DomainSpec::to_canonical_json)
        .collect();
    assert_eq!(a, b);
}

#[test]
fn confounded_prefix_leaves_the_consistent_hypotheses() {
    for seed in 0..20 {
        let task = gen_confounded(seed).unwrap();
        let on_with = BTreeSet::from(["o1".to_string(), "o2".to_string()]);
        let consistent: Vec<String> = task
            .domain
            .rule_prior
            .keys()
            .filter(|h| detector_on(h, &on_with))
            .cloned()
            .collect();
        assert!(consistent.contains(&task.true_hypothesis));
        let inst = task.instance().unwrap();
        let mut p = HypothesisPosterior::prior(&task.domain).unwrap();
        for e in &task.prefix {
            p = update(&p, e.clone(), &inst).unwrap();
        }
        assert_eq!(p.support, consistent, "seed {seed}");
        // more than one survivor: the prefix alone does not identify the truth
        assert!(consistent.len() > 1);
    }
}

#[test]
fn explore_exploit_prior_favours_few_blickets() {
    let spec = gen_explore_exploit(4, 0.5, 1).unwrap();
    let d = &spec.domain;
    assert!(d.persistent_rules);
    assert_eq!(d.rewards.oracle_query_cost, -0.5);
    let raw: BTreeMap<&String, f64> = d
        .rule_prior
        .keys()
        .map(|h| {
            let (law, set) = parse_hypothesis(h);
            assert_eq!(law, Law::Or);
            let k = set.len() as i32;
            (h, 0.25f64.powi(k) * 0.75f64.powi(4 - k))
        })
        .collect();
    let z: f64 = raw.values().sum();
    for (h, w) in raw {
        assert!((d.rule_prior[h] - w / z).abs() < 1e-12, "{h}");
    }
    let instances = sample_session(&spec).unwrap();
    assert_eq!(instances.len(), 4);
    for i in &instances {
        assert_eq!(i.objects().len(), 2);
        assert_eq!(i.true_hypothesis, instances[0].true_hypothesis);
    }
}

#[test]
fn battery_scores_lie_in_the_unit_interval() {
    let config = AgentConfig::default();
    for seed in 0..3 {
        for item in gen_epistemic_battery(seed).unwrap() {
            let response = item.causal_agent_response(&config).unwrap();
            let s = score_battery_item(&item, &response).unwrap();
            assert!((0.0..=1.0).contains(&s), "{}: {s}", item.id);
            if let BatteryProbe::QuerySelection { best_gain, .. } = &item.probe {
                let silent = score_battery_item(&item, &BatteryResponse::Query(None)).unwrap();
                assert_eq!(silent, if *best_gain > 0.0 { 0.0 } else { 1.0 }, "{}", item.id);
            }
        }
    }
}

#[test]
fn counterfactual_truth_follows_the_law() {
    for item in gen_epistemic_battery(0).unwrap() {
        let BatteryProbe::Counterfactual { question, truth } = &item.probe else {
            continue;
        };
        let kept: BTreeSet<String> = question
            .placed
            .iter()
            .filter(|o| **o != question.remove)
            .cloned()
            .collect();
        assert_eq!(*truth, detector_on(&item.true_hypothesis, &kept), "{}", item.id);
        let right = score_battery_item(&item, &BatteryResponse::Counterfactual(*truth)).unwrap();
        let wrong = score_battery_item(&item, &BatteryResponse::Counterfactual(!*truth)).unwrap();
        assert_eq!((right, wrong), (1.0, 0.0));
    }
}

#[test]
fn mismatched_responses_are_refused() {
    let items = gen_epistemic_battery(0).unwrap();
    let query = items
        .iter()
        .find(|i| matches!(i.probe, BatteryProbe::QuerySelection { .. }))
        .unwrap();
    let what_if = items
        .iter()
        .find(|i| matches!(i.probe, BatteryProbe::Counterfactual { .. }))
        .unwrap();
    assert!(matches!(
        score_battery_item(query, &BatteryResponse::Counterfactual(true)),
        Err(ScoopError::ContractViolation(_))
    ));
    assert!(score_battery_item(what_if, &BatteryResponse::Query(None)).is_err());
}

#[test]
fn family_names_round_trip() {
    for f in [
        TaskFamily::Blicket,
        TaskFamily::Confounded,
        TaskFamily::ExploreExploit,
        TaskFamily::Boxes,
        TaskFamily::EpistemicBattery,
    ] {
        assert_eq!(f.to_string().parse::<TaskFamily>().unwrap(), f);
    }
    assert_eq!(
        "explore-exploit".parse::<TaskFamily>().unwrap(),
        TaskFamily::ExploreExploit
    );
    assert!("cooking".parse::<TaskFamily>().is_err());
}

#[test]
fn family_specs_fill_in_defaults() {
    let blicket = TaskFamilySpec::new(TaskFamily::Blicket, 3).session().unwrap();
    assert_eq!(blicket.instance_count, 1);
    assert_eq!(blicket.domain.rule_prior.len(), 4);
    let boxes = TaskFamilySpec {
        n_boxes: Some(2),
        instance_count: Some(3),
        ..TaskFamilySpec::new(TaskFamily::Boxes, 0)
    }
    .session()
    .unwrap();
    assert_eq!(boxes.instance_count, 3);
    assert_eq!(boxes.domain.rule_prior.len(), 6);
}
