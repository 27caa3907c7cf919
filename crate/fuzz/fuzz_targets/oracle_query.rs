#![no_main]
use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use scoop_core::actors::{answer_oracle, OracleQuery};
use scoop_core::domain::{ground_instance, Goal, ProblemInstance};
use scoop_core::tasks::gen_boxes;

fn instance() -> &'static ProblemInstance {
    static INSTANCE: OnceLock<ProblemInstance> = OnceLock::new();
    INSTANCE.get_or_init(|| {
        let d = gen_boxes(2, 0).unwrap();
        let goal = Goal(d.goals[0].goal.clone());
        ground_instance(&d, &d.objects, "chained/box_b", &goal, 0).unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(q) = s.parse::<OracleQuery>() {
        assert_eq!(q.to_string().parse::<OracleQuery>().ok(), Some(q.clone()));
        let inst = instance();
        let answer = answer_oracle(&q, inst, &inst.initial_state);
        assert_eq!(answer.cost_charged, inst.oracle_query_cost);
    }
});
