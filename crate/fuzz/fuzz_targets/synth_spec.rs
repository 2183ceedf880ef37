#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = kbrl::corpus::SynthSpec::from_json(data);
});
