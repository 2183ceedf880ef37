#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(d) = kbrl::corpus::parse_difficulties(data) {
        assert!(d.records().all(|r| (0.0..=1.0).contains(&r.base_difficulty)));
    }
});
