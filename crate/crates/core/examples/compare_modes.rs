//! Trains every mode on the reference corpus and prints the dynamics summary.
//!
//! cargo run --release -p kbrl --example compare_modes [corpus.json] [train.json]

use std::path::PathBuf;

use kbrl::corpus::{generate_synthetic_corpus, SynthSpec};
use kbrl::graph::{build_graph, holdout_evaluation};
use kbrl::retrieval::{build_text_index, Retriever};
use kbrl::rng::substream;
use kbrl::trainer::{run_training, Mode, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let args: Vec<String> = std::env::args().skip(1).collect();
    let spec_path = args.first().map(PathBuf::from).unwrap_or(root.join("reference_corpus.json"));
    let train_path = args.get(1).map(PathBuf::from).unwrap_or(root.join("reference_train.json"));
    let spec = SynthSpec::from_json(&std::fs::read_to_string(spec_path)?)?;
    let base = TrainerConfig::from_json(&std::fs::read_to_string(train_path)?)?;

    let synth = generate_synthetic_corpus(&spec)?;
    let index = build_text_index(&synth.corpus, base.chunk_size)?;
    let graph = build_graph(&synth.corpus, base.top_m)?;

    let recall = Retriever::new(&synth.corpus, &index, base.lambda)?.recall_at_k(&[1, 5, 10])?;
    let recall: Vec<String> = recall.iter().map(|r| format!("R@{}={:.3}", r.k, r.recall)).collect();
    println!("{}", recall.join(" "));
    println!("mode           zero_adv@100  ignored@end  final_g  upgrades             eval");
    for mode in Mode::ALL {
        let cfg = TrainerConfig { mode, ..base.clone() };
        let log = run_training(&cfg, &synth.corpus, &index, &graph, &synth.difficulties)?;
        println!(
            "{:<14} {:>12.3} {:>12} {:>8}  {:<20} {:?}",
            mode.name(),
            log.mean_zero_adv(100),
            log.summary.total_ignored,
            log.summary.final_g,
            format!("{:?}", log.summary.upgrade_iterations),
            log.summary.final_eval_accuracy,
        );
        if let Some(state) = &log.summary.final_state {
            println!("  competence {:.3}", state.competence);
        }
        if mode == Mode::Full {
            let kernel = graph.clone().row_normalize();
            let mut rng = substream(cfg.seed, &[99]);
            let h = holdout_evaluation(&kernel, &log.summary.observed_means, 0.3, &cfg.propagation(), cfg.readout, &mut rng)?;
            println!("  holdout: {h:?}");
        }
    }
    Ok(())
}
