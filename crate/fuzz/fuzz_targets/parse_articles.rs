#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(articles) = kbrl::corpus::parse_articles(data) {
        let _ = kbrl::corpus::Corpus::new(articles, Vec::new());
    }
});
