#![no_main]
use libfuzzer_sys::fuzz_target;
use scoop_core::agent::parse_react_step;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_react_step(s);
    }
});
