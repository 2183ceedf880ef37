#![no_main]

use kbrl::trainer::TrainerConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = TrainerConfig::from_json(data) {
        assert_eq!(TrainerConfig::from_json(&cfg.to_json()).expect("re-parse"), cfg);
    }
});
