#![no_main]

use kbrl::graph::SimilarityGraph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(graph) = SimilarityGraph::from_jsonl(data) {
        let again = SimilarityGraph::from_jsonl(&graph.to_jsonl()).expect("re-parse");
        assert_eq!(again, graph);
    }
});
