#![no_main]
use libfuzzer_sys::fuzz_target;
use scoop_core::domain::Goal;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(goal) = Goal::parse(s) {
            assert_eq!(Goal::parse(&goal.to_string()).ok(), Some(goal));
        }
    }
});
