mod common;

use proptest::prelude::*;
use scoop_core::agent::{
    causal_refinement_and_action, free_exploration, parse_react_step, run_episode, AgentEvent,
    AgentKnowledge, ConversationMemory, EpisodeContext, EpisodeOutcome, MemoryItem, ReActStep,
    ReplayReasoner, ScriptedPolicy, ScriptedReasoner,
};
use scoop_core::domain::ProblemInstance;
use scoop_core::env::{AgentAction, Episode};
use scoop_core::knowledge::{entropy, HypothesisPosterior};
use scoop_core::refinement::AgentConfig;
use scoop_core::tasks::{gen_boxes, BlicketLaw};

use common::{blicket_instance, instance_of};

#[test]
fn parses_labelled_lines() {
    let step = parse_react_step("Thought: look first\nAction: EnvAct\nAction Input: open(box_a)").unwrap();
    assert_eq!(step, ReActStep::action("look first", "EnvAct", "open(box_a)"));
    assert!(!step.is_terminal());

    let step = parse_react_step("Thought: done\nAnswer: item B is yours").unwrap();
    assert_eq!(step.answer, "item B is yours");
    assert!(step.is_terminal());
}

#[test]
fn parser_tolerates_order_and_padding() {
    let step =
        parse_react_step("  Action Input:  refine \nnoise\nAction: CausalRefinementAndAction\n").unwrap();
    assert_eq!(step.action, "CausalRefinementAndAction");
    assert_eq!(step.action_input, "refine");
    assert_eq!(step.thought, "");
    // last occurrence wins
    assert_eq!(parse_react_step("Action: A\nAction: B").unwrap().action, "B");
}

#[test]
fn unlabelled_text_is_malformed() {
    assert!(parse_react_step("").is_err());
    assert!(parse_react_step("I think I will open the box").is_err());
    assert_eq!(parse_react_step("hello").unwrap_err().0, "hello");
}

#[test]
fn memory_only_grows() {
    let mut m = ConversationMemory::new();
    assert!(m.is_empty());
    m.push_step(ReActStep::action("t", "Observe", ""));
    m.push_observation("the detector is off.");
    m.push_step(ReActStep::answer("t", "done"));
    assert_eq!(m.len(), 3);
    for (i, e) in m.entries().iter().enumerate() {
        assert_eq!(e.index, i);
    }
    assert_eq!(m.last_observation(), Some("the detector is off."));
    let rendered = m.render();
    assert!(rendered.starts_with("[0] Thought: t\nAction: Observe"));
    assert!(rendered.contains("[1] Observation: the detector is off.\n"));
}

fn start(inst: &ProblemInstance) -> (Episode, AgentKnowledge) {
    let episode = Episode::new(inst);
    let knowledge = AgentKnowledge::new(HypothesisPosterior::prior(&inst.domain).unwrap(), &episode);
    (episode, knowledge)
}

#[test]
fn zero_budget_explores_nothing() {
    let inst = blicket_instance(2, &[BlicketLaw::Or], "or[o1]", 0);
    let (mut episode, mut knowledge) = start(&inst);
    let before = knowledge.clone();
    let mut events = Vec::new();
    let spent = free_exploration(&mut knowledge, &AgentConfig::default(), &mut episode, &mut events).unwrap();
    assert_eq!(spent, 0.0);
    assert_eq!(knowledge, before);
    assert!(events.is_empty());
    assert!(episode.records().is_empty());
}

#[test]
fn two_queries_settle_two_objects() {
    for truth in ["or[]", "or[o1]", "or[o2]", "or[o1,o2]"] {
        let inst = blicket_instance(2, &[BlicketLaw::Or], truth, 0);
        let (mut episode, mut knowledge) = start(&inst);
        // instance costs are signed returns; the agent's prices are magnitudes
        let price = -inst.oracle_query_cost;
        let config = AgentConfig {
            budget: 5.0 * price,
            oracle_cost: price,
            ..AgentConfig::default()
        };
        let mut events = Vec::new();
        let spent = free_exploration(&mut knowledge, &config, &mut episode, &mut events).unwrap();
        assert_eq!(episode.records().len(), 2, "{truth}");
        assert_eq!(spent, 2.0 * price);
        assert_eq!(entropy(&knowledge.posterior), 0.0);
        assert_eq!(knowledge.posterior.support, vec![truth.to_string()]);
        let beta: f64 = episode.records().iter().map(|r| r.beta).sum();
        assert_eq!(beta, -spent);
        assert!(events
            .iter()
            .all(|e| matches!(e, AgentEvent::Decision { chosen, .. } if chosen == "explore")));
    }
}

#[test]
fn exploration_stops_below_the_threshold() {
    let inst = blicket_instance(2, &[BlicketLaw::Or], "or[o1]", 0);
    let (mut episode, mut knowledge) = start(&inst);
    let config = AgentConfig {
        budget: 10.0,
        gain_threshold: 1.0,
        ..AgentConfig::default()
    };
    let spent = free_exploration(&mut knowledge, &config, &mut episode, &mut Vec::new()).unwrap();
    assert_eq!(spent, 0.0);
}

#[test]
fn budget_short_of_one_query_buys_nothing() {
    let inst = blicket_instance(2, &[BlicketLaw::Or], "or[o1]", 0);
    let (mut episode, mut knowledge) = start(&inst);
    let config = AgentConfig {
        budget: 0.4,
        oracle_cost: 0.5,
        ..AgentConfig::default()
    };
    assert_eq!(
        free_exploration(&mut knowledge, &config, &mut episode, &mut Vec::new()).unwrap(),
        0.0
    );
}

#[test]
fn subroutine_rejects_unknown_modes() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let (mut episode, mut knowledge) = start(&inst);
    let text = causal_refinement_and_action(
        "dance",
        &mut knowledge,
        &AgentConfig::default(),
        &mut episode,
        &mut Vec::new(),
    );
    assert!(text.starts_with("error:"), "{text}");
    assert!(episode.records().is_empty());
}

#[test]
fn refine_asks_about_the_open_edge() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let (mut episode, mut knowledge) = start(&inst);
    let mut events = Vec::new();
    let config = AgentConfig {
        oracle_cost: -inst.oracle_query_cost,
        ..AgentConfig::default()
    };
    causal_refinement_and_action("refine", &mut knowledge, &config, &mut episode, &mut events);
    assert_eq!(knowledge.posterior.support, vec!["box_a".to_string()]);
    let probes: Vec<&AgentAction> = events
        .iter()
        .filter_map(|e| match e {
            AgentEvent::Decision { probe: Some(p), .. } => Some(p),
            _ => None,
        })
        .collect();
    assert_eq!(probes.len(), 1);
}

fn solve(policy: ScriptedPolicy, truth: &str) -> (EpisodeOutcome, Episode) {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), truth, 0);
    let (mut episode, knowledge) = start(&inst);
    let context = EpisodeContext::for_instance(&inst, "held(item_b)");
    let mut reasoner = ScriptedReasoner::new(policy);
    let result = run_episode(
        &mut episode,
        &context,
        &AgentConfig::default(),
        &mut reasoner,
        knowledge,
    );
    (result.outcome, episode)
}

#[test]
fn scripted_agents_fetch_the_item() {
    for policy in [
        ScriptedPolicy::Causal,
        ScriptedPolicy::Baseline,
        ScriptedPolicy::Omniscient,
    ] {
        for truth in ["box_a", "loose"] {
            let (outcome, episode) = solve(policy, truth);
            assert!(outcome.is_answered(), "{policy:?} {truth}: {outcome:?}");
            assert!(episode.is_terminal(), "{policy:?} {truth}");
        }
    }
}

#[test]
fn omniscient_agent_never_asks() {
    let (_, episode) = solve(ScriptedPolicy::Omniscient, "box_a");
    assert!(episode.records().iter().all(|r| r.beta == 0.0));
    let acts: Vec<String> = episode
        .records()
        .iter()
        .map(|r| r.agent_action.to_string())
        .collect();
    assert_eq!(acts, ["open(box_a)", "take(item_b)"]);
}

#[test]
fn silence_twice_fails_the_episode() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let (mut episode, knowledge) = start(&inst);
    let context = EpisodeContext::for_instance(&inst, "held(item_b)");
    let mut reasoner = ReplayReasoner::new(["what", "now"]);
    let result = run_episode(
        &mut episode,
        &context,
        &AgentConfig::default(),
        &mut reasoner,
        knowledge,
    );
    assert_eq!(
        result.outcome,
        EpisodeOutcome::Failed {
            reason: "malformed reasoner output".into()
        }
    );
    assert_eq!(result.iterations, 2);
}

#[test]
fn step_budget_ends_a_dithering_agent() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let (mut episode, knowledge) = start(&inst);
    let context = EpisodeContext::for_instance(&inst, "held(item_b)");
    let config = AgentConfig {
        max_steps: 3,
        ..AgentConfig::default()
    };
    let mut reasoner = ReplayReasoner::new(vec!["Action: Observe\nAction Input:"; 10]);
    let result = run_episode(&mut episode, &context, &config, &mut reasoner, knowledge);
    assert!(!result.outcome.is_answered());
    assert_eq!(result.iterations, 3);
    assert_eq!(result.memory.len(), 6);
    assert!(episode.records().is_empty());
}

#[test]
fn unknown_tools_are_reported() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let (mut episode, knowledge) = start(&inst);
    let context = EpisodeContext::for_instance(&inst, "held(item_b)");
    let mut reasoner = ReplayReasoner::new(["Action: Fly\nAction Input: away", "Answer: gave up"]);
    let result = run_episode(
        &mut episode,
        &context,
        &AgentConfig::default(),
        &mut reasoner,
        knowledge,
    );
    let observed = result.memory.entries().iter().find_map(|e| match &e.item {
        MemoryItem::Observation { text } => Some(text.clone()),
        _ => None,
    });
    assert_eq!(observed.as_deref(), Some("UnknownAction: Fly"));
    assert_eq!(
        result.outcome,
        EpisodeOutcome::Answered {
            answer: "gave up".into()
        }
    );
}

#[test]
fn context_lists_scene_and_actions() {
    let inst = instance_of(&gen_boxes(1, 0).unwrap(), "box_a", 0);
    let ctx = EpisodeContext::for_instance(&inst, "held(item_b)");
    assert_eq!(ctx.user_prompt, "held(item_b)");
    assert!(ctx.environment_description.contains("box_a is not open."));
    assert!(ctx.environment_description.contains("open(box_a)"));
}

proptest! {
    #[test]
    fn rendered_steps_parse_back(
        thought in "[a-z][a-z ]{0,20}[a-z]",
        action in "[A-Z][A-Za-z]{0,12}",
        input in "[a-z(_)]{0,12}",
        answer in proptest::option::of("[a-z][a-z ]{0,10}[a-z]"),
    ) {
        let step = match answer {
            Some(a) => ReActStep::answer(&thought, &a),
            None => ReActStep::action(&thought, &action, &input),
        };
        prop_assert_eq!(parse_react_step(&step.to_string()).unwrap(), step);
    }

    #[test]
    fn memory_indices_follow_pushes(ops in proptest::collection::vec(any::<bool>(), 0..30)) {
        let mut m = ConversationMemory::new();
        let mut snapshots = Vec::new();
        for (i, step) in ops.iter().enumerate() {
            if *step {
                m.push_step(ReActStep::action("t", "Observe", ""));
            } else {
                m.push_observation(format!("o{i}"));
            }
            snapshots.push(m.entries().to_vec());
        }
        for (k, snap) in snapshots.iter().enumerate() {
            prop_assert_eq!(snap.len(), k + 1);
            prop_assert_eq!(&m.entries()[..=k], &snap[..]);
        }
    }
}
