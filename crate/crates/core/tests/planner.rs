mod common;

use proptest::prelude::*;
use scoop_core::domain::ProblemInstance;
use scoop_core::env::Episode;
use scoop_core::knowledge::HypothesisPosterior;
use scoop_core::planner::{
    extract_plan, induce_mdp, value_iterate, InducedMdp, PlanMode, PlannerConfig, Transition,
};
use scoop_core::tasks::{gen_blicket, gen_boxes, BlicketLaw};
use scoop_core::ScoopError;

use common::{detector_on, instance_of, laws, parse_hypothesis, random_mdp, rng, tree_search};

fn certain(h: &str) -> HypothesisPosterior {
    HypothesisPosterior::from_weights(&[(h, 1.0)]).unwrap()
}

fn plan_for(
    inst: &ProblemInstance,
    p: &HypothesisPosterior,
    mode: PlanMode,
) -> (InducedMdp, scoop_core::planner::Plan) {
    let config = PlannerConfig {
        mode,
        ..PlannerConfig::default()
    };
    let mdp = induce_mdp(p, &inst.initial_state.values, &inst.user_goal, inst, &config, 20).unwrap();
    let vf = value_iterate(&mdp, 1e-12).unwrap();
    let plan = extract_plan(&mdp, &vf, 0, Some(inst));
    (mdp, plan)
}

fn action_cost(inst: &ProblemInstance, label: &str) -> f64 {
    inst.model.actions.iter().find(|a| a.label == label).unwrap().cost
}

#[test]
fn boxed_item_needs_two_steps() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let (mdp, plan) = plan_for(&inst, &certain("box_a"), PlanMode::Map);
    assert_eq!(mdp.state_count(), 3);
    assert_eq!(plan.step_labels(), ["open(box_a)", "take(item_b)"]);
    let expected = action_cost(&inst, "open(box_a)")
        + inst.gamma * (action_cost(&inst, "take(item_b)") + inst.goal_reward);
    assert!((plan.expected_value - expected).abs() < 1e-9);
}

#[test]
fn loose_item_is_just_taken() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "loose", 0);
    let (_, plan) = plan_for(&inst, &certain("loose"), PlanMode::Map);
    assert_eq!(plan.step_labels(), ["take(item_b)"]);
}

#[test]
fn chained_boxes_open_in_order() {
    let inst = instance_of(&gen_boxes(2, 0).unwrap(), "chained/box_b", 0);
    let (_, plan) = plan_for(&inst, &certain("chained/box_b"), PlanMode::Map);
    assert_eq!(plan.step_labels(), ["open(box_a)", "open(box_b)", "take(item_b)"]);
}

fn t(next: usize, reward: f64) -> Vec<Transition> {
    vec![Transition {
        next,
        prob: 1.0,
        reward,
    }]
}

#[test]
fn two_step_chain_discounts_once() {
    let mdp = InducedMdp::from_parts(
        vec!["go".into()],
        vec![vec![t(1, 0.0)], vec![t(2, 1.0)], vec![t(2, 0.0)]],
        vec![false, false, true],
        0.9,
        None,
    )
    .unwrap();
    let vf = value_iterate(&mdp, 1e-12).unwrap();
    assert!((vf.values[0] - 0.9).abs() < 1e-12);
    assert!((vf.values[1] - 1.0).abs() < 1e-12);
    assert_eq!(vf.values[2], 0.0);
    let plan = extract_plan(&mdp, &vf, 0, None);
    assert_eq!(plan.step_labels(), ["go", "go"]);
}

#[test]
fn zero_rewards_give_zero_values() {
    let mdp = InducedMdp::from_parts(
        vec!["a".into(), "b".into()],
        vec![vec![t(1, 0.0), t(0, 0.0)], vec![t(0, 0.0), t(1, 0.0)]],
        vec![false, false],
        0.9,
        None,
    )
    .unwrap();
    assert_eq!(value_iterate(&mdp, 1e-12).unwrap().values, vec![0.0, 0.0]);
}

#[test]
fn starting_at_the_goal_plans_nothing() {
    let mdp = InducedMdp::from_parts(vec!["a".into()], vec![vec![t(0, 0.0)]], vec![true], 0.9, None).unwrap();
    let vf = value_iterate(&mdp, 1e-12).unwrap();
    let plan = extract_plan(&mdp, &vf, 0, None);
    assert!(plan.steps.is_empty());
    assert_eq!(plan.policy, vec![None]);
}

#[test]
fn ties_go_to_the_first_label() {
    let mdp = InducedMdp::from_parts(
        vec!["a".into(), "b".into()],
        vec![vec![t(1, 1.0), t(1, 1.0)], vec![t(1, 0.0), t(1, 0.0)]],
        vec![false, true],
        0.9,
        None,
    )
    .unwrap();
    let vf = value_iterate(&mdp, 1e-12).unwrap();
    assert_eq!(extract_plan(&mdp, &vf, 0, None).policy[0], Some(0));
}

#[test]
fn undiscounted_needs_a_horizon() {
    let mdp =
        InducedMdp::from_parts(vec!["a".into()], vec![vec![t(0, 1.0)]], vec![false], 1.0, None).unwrap();
    assert!(matches!(
        value_iterate(&mdp, 1e-9),
        Err(ScoopError::OutOfRange(_))
    ));
    let bounded =
        InducedMdp::from_parts(vec!["a".into()], vec![vec![t(0, 1.0)]], vec![false], 1.0, Some(4)).unwrap();
    assert_eq!(value_iterate(&bounded, 1e-9).unwrap().values, vec![4.0]);
}

#[test]
fn malformed_tables_are_rejected() {
    let half = vec![Transition {
        next: 0,
        prob: 0.5,
        reward: 0.0,
    }];
    assert!(InducedMdp::from_parts(vec!["a".into()], vec![vec![half]], vec![false], 0.9, None).is_err());
    assert!(InducedMdp::from_parts(vec!["a".into()], vec![vec![t(3, 0.0)]], vec![false], 0.9, None).is_err());
    assert!(InducedMdp::from_parts(vec!["a".into()], vec![vec![t(0, 0.0)]], vec![], 0.9, None).is_err());
}

#[test]
fn map_and_expected_agree_when_certain() {
    for h in ["box_a", "loose"] {
        let inst = instance_of(&gen_boxes(1, 0).unwrap(), h, 0);
        let (a, pa) = plan_for(&inst, &certain(h), PlanMode::Map);
        let (b, pb) = plan_for(&inst, &certain(h), PlanMode::Expected);
        assert_eq!(a.states, b.states);
        assert_eq!(pa.steps, pb.steps);
        assert!((pa.expected_value - pb.expected_value).abs() < 1e-12);
    }
}

#[test]
fn state_cap_is_enforced() {
    let inst = instance_of(&gen_boxes(3, 0).unwrap(), "free/box_c", 0);
    let config = PlannerConfig {
        state_cap: 2,
        ..PlannerConfig::default()
    };
    let p = HypothesisPosterior::prior(&inst.domain).unwrap();
    let err = induce_mdp(
        &p,
        &inst.initial_state.values,
        &inst.user_goal,
        &inst,
        &config,
        20,
    )
    .unwrap_err();
    assert!(matches!(err, ScoopError::StateExplosion { cap: 2 }));
}

/// With the truth known, following the plan reaches the goal whenever the
/// goal is reachable at all.
#[test]
fn certain_plans_reach_the_goal() {
    let mut domains = vec![];
    for n in 1..=3 {
        domains.push(gen_boxes(n, 0).unwrap());
        domains.push(gen_blicket(n, &laws(&[BlicketLaw::Or, BlicketLaw::And]), 0).unwrap());
    }
    for domain in &domains {
        for h in domain.rule_prior.keys() {
            let inst = instance_of(domain, h, 0);
            let (_, plan) = plan_for(&inst, &certain(h), PlanMode::Map);
            let reachable = !h.contains('[') || detector_on(h, &parse_hypothesis(h).1);
            let mut ep = Episode::new(&inst);
            for a in &plan.steps {
                ep.step(a).unwrap();
            }
            assert_eq!(
                ep.is_terminal(),
                reachable,
                "{} under {h}: {:?}",
                domain.name,
                plan.step_labels()
            );
        }
    }
}

fn scaled(mdp: &InducedMdp, c: f64) -> InducedMdp {
    let mut m = mdp.clone();
    for row in &mut m.transitions {
        for dist in row {
            for tr in dist {
                tr.reward *= c;
            }
        }
    }
    m
}

proptest! {
    #[test]
    fn scaling_rewards_keeps_the_policy(seed in any::<u64>(), finite in any::<bool>(), c in 0.1f64..10.0) {
        let m = random_mdp(&mut rng(seed), finite);
        let mdp = m.to_induced();
        let vf = value_iterate(&mdp, 1e-12).unwrap();
        let big = scaled(&mdp, c);
        let vf_big = value_iterate(&big, 1e-12).unwrap();
        for s in 0..mdp.state_count() {
            prop_assert!((vf_big.values[s] - c * vf.values[s]).abs() <= 1e-6 * (1.0 + c * vf.values[s].abs()));
        }
        // argmax sets match; tie-breaking picks the same member
        if let Some(h) = m.horizon {
            for s in 0..mdp.state_count() {
                let (_, first) = tree_search(&m, s, h);
                let p = extract_plan(&big, &vf_big, 0, None);
                prop_assert_eq!(p.policy[s], if m.goal[s] { None } else { first.first().copied() });
            }
        }
    }

    #[test]
    fn residuals_contract_by_gamma(seed in any::<u64>()) {
        let m = random_mdp(&mut rng(seed), false);
        let vf = value_iterate(&m.to_induced(), 1e-12).unwrap();
        for w in vf.residuals.windows(2) {
            prop_assert!(w[1] <= m.gamma * w[0] + 1e-12, "{:?}", vf.residuals);
        }
        prop_assert!(*vf.residuals.last().unwrap() <= 1e-12);
    }

    #[test]
    fn finite_horizon_matches_tree_search(seed in any::<u64>()) {
        let m = random_mdp(&mut rng(seed), true);
        let vf = value_iterate(&m.to_induced(), 1e-12).unwrap();
        let h = m.horizon.unwrap();
        prop_assert_eq!(vf.residuals.len(), h as usize);
        for s in 0..m.p.len() {
            prop_assert!((vf.values[s] - tree_search(&m, s, h).0).abs() < 1e-9);
        }
    }
}
