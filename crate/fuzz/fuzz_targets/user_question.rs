#![no_main]
use libfuzzer_sys::fuzz_target;
use scoop_core::actors::UserPolicy;
use scoop_core::env::UserQuestion;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(q) = s.parse::<UserQuestion>() {
        assert_eq!(q.to_string().parse::<UserQuestion>().ok(), Some(q));
    }
    let _ = s.parse::<UserPolicy>();
});
