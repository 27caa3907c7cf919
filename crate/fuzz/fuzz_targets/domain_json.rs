#![no_main]
use libfuzzer_sys::fuzz_target;
use scoop_core::domain::{validate_domain, DomainSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(domain) = DomainSpec::from_json(text) {
        let _ = validate_domain(&domain);
        let canonical = domain.to_canonical_json();
        let again = DomainSpec::from_json(&canonical).expect("canonical form reparses");
        assert_eq!(again.to_canonical_json(), canonical);
    }
});
