#![no_main]
use libfuzzer_sys::fuzz_target;
use scoop_core::harness::{read_trace, trace_to_string};

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = read_trace(data) {
        let text = trace_to_string(&trace);
        let back = read_trace(text.as_bytes()).expect("written traces read back");
        assert_eq!(trace_to_string(&back), text);
    }
});
