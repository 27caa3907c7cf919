#![no_main]
use libfuzzer_sys::fuzz_target;
use scoop_core::domain::SessionSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SessionSpec::from_json(text);
    }
});
