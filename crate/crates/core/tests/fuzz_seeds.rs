//! The checked-in fuzz seeds must stay valid inputs for their parsers.

use std::fs;
use std::path::PathBuf;

use kbrl::corpus::{parse_articles, parse_difficulties, parse_samples, SynthSpec};
use kbrl::graph::SimilarityGraph;
use kbrl::retrieval::TextIndex;
use kbrl::trainer::{parse_metrics_csv, RunRecord, TrainerConfig};
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.iter().map(|p| fs::read_to_string(p).unwrap()).collect()
}

#[test]
fn every_seed_parses() {
    for s in seeds("parse_articles") {
        parse_articles(&s).unwrap();
    }
    for s in seeds("parse_samples") {
        parse_samples(&s).unwrap();
    }
    for s in seeds("parse_difficulties") {
        parse_difficulties(&s).unwrap();
    }
    for s in seeds("synth_spec") {
        SynthSpec::from_json(&s).unwrap();
    }
    for s in seeds("text_index") {
        let index = TextIndex::from_json(&s).unwrap();
        assert_eq!(TextIndex::from_json(&index.to_json()).unwrap(), index);
    }
    for s in seeds("graph_jsonl") {
        let g = SimilarityGraph::from_jsonl(&s).unwrap();
        assert_eq!(SimilarityGraph::from_jsonl(&g.to_jsonl()).unwrap(), g);
    }
    for s in seeds("trainer_config") {
        TrainerConfig::from_json(&s).unwrap();
    }
    for s in seeds("metrics_csv") {
        assert!(!parse_metrics_csv(&s).unwrap().is_empty());
    }
    for s in seeds("run_json") {
        let r = RunRecord::from_json(&s).unwrap();
        assert_eq!(RunRecord::from_json(&r.to_json()).unwrap(), r);
    }
}

/// Runs one parser on arbitrary text; only a panic counts as failure.
fn exercise(target: usize, input: &str) {
    match target {
        0 => drop(parse_articles(input)),
        1 => drop(parse_samples(input)),
        2 => drop(parse_difficulties(input)),
        3 => drop(SynthSpec::from_json(input)),
        4 => {
            if let Ok(index) = TextIndex::from_json(input) {
                let _ = index.passage_scores("some query");
            }
        }
        5 => drop(SimilarityGraph::from_jsonl(input)),
        6 => drop(TrainerConfig::from_json(input)),
        7 => drop(parse_metrics_csv(input)),
        _ => drop(RunRecord::from_json(input)),
    }
}

const TARGETS: [&str; 9] = [
    "parse_articles",
    "parse_samples",
    "parse_difficulties",
    "synth_spec",
    "text_index",
    "graph_jsonl",
    "trainer_config",
    "metrics_csv",
    "run_json",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mutated_seeds_never_panic(
        target in 0usize..9,
        edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>(), 0u8..3), 1..8),
    ) {
        let mut bytes = seeds(TARGETS[target]).swap_remove(0).into_bytes();
        for (at, byte, op) in edits {
            if bytes.is_empty() {
                bytes.push(byte);
                continue;
            }
            let i = at.index(bytes.len());
            match op {
                0 => bytes[i] = byte,
                1 => bytes.insert(i, byte),
                _ => {
                    bytes.remove(i);
                }
            }
        }
        exercise(target, &String::from_utf8_lossy(&bytes));
    }
}
