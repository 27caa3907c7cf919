#![no_main]
use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use scoop_core::domain::{ground_instance, Goal, ProblemInstance};
use scoop_core::knowledge::parse_description;
use scoop_core::tasks::{gen_blicket, gen_boxes, BlicketLaw};

fn instances() -> &'static [ProblemInstance; 2] {
    static INSTANCES: OnceLock<[ProblemInstance; 2]> = OnceLock::new();
    INSTANCES.get_or_init(|| {
        let ground = |d: scoop_core::domain::DomainSpec, h: &str| {
            let goal = Goal(d.goals[0].goal.clone());
            ground_instance(&d, &d.objects, h, &goal, 0).unwrap()
        };
        let laws = [BlicketLaw::Or, BlicketLaw::And].into_iter().collect();
        [
            ground(gen_boxes(1, 0).unwrap(), "box_a"),
            ground(gen_blicket(2, &laws, 0).unwrap(), "or[o1]"),
        ]
    })
}

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        for inst in instances() {
            let _ = parse_description(s, inst);
        }
    }
});
