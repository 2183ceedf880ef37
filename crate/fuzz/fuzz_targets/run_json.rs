#![no_main]

use kbrl::trainer::RunRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(record) = RunRecord::from_json(data) {
        assert_eq!(RunRecord::from_json(&record.to_json()).expect("re-parse"), record);
    }
});
