#![no_main]
use std::fmt::Display;
use std::str::FromStr;

use libfuzzer_sys::fuzz_target;
use scoop_core::domain::{ActionTerm, Atom, Edge, Literal, Trigger};

// whatever parses must print to text that parses back to the same value
fn round_trip<T: FromStr + Display + PartialEq + std::fmt::Debug>(s: &str) {
    if let Ok(v) = s.parse::<T>() {
        let printed = v.to_string();
        match printed.parse::<T>() {
            Ok(back) => assert_eq!(back, v, "{s:?} printed as {printed:?}"),
            Err(_) => panic!("{s:?} printed as unparseable {printed:?}"),
        }
    }
}

fuzz_target!(|data: &[u8]| {
    let Some((&kind, rest)) = data.split_first() else {
        return;
    };
    let Ok(s) = std::str::from_utf8(rest) else {
        return;
    };
    match kind % 5 {
        0 => round_trip::<Atom>(s),
        1 => round_trip::<Literal>(s),
        2 => round_trip::<ActionTerm>(s),
        3 => round_trip::<Trigger>(s),
        _ => round_trip::<Edge>(s),
    }
});
