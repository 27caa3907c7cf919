//! Generated evaluation families: blicket detectors, confounded evidence,
//! persistent-rule sessions, nested boxes, and the epistemic battery.

mod battery;
mod families;

pub use battery::{
    gen_epistemic_battery, is_disambiguating, score_battery_item, BatteryItem, BatteryProbe, BatteryResponse,
    CounterfactualQuestion,
};
pub use families::{
    blicket_hypothesis_count, gen_blicket, gen_boxes, gen_confounded, gen_explore_exploit, BlicketLaw,
    ConfoundedTask, TaskFamily, TaskFamilySpec, MAX_BLICKET_OBJECTS, MAX_BOXES,
};
