#![no_main]

use kbrl::retrieval::TextIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(index) = TextIndex::from_json(data) {
        let again = TextIndex::from_json(&index.to_json()).expect("re-parse");
        assert_eq!(again, index);
        let _ = index.passage_scores("fuzz query");
    }
});
