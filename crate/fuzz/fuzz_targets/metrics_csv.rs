#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(rows) = kbrl::trainer::parse_metrics_csv(data) {
        assert!(rows.windows(2).all(|w| w[0].iteration < w[1].iteration));
    }
});
