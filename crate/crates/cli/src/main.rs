use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use kbrl::corpus::{
    generate_synthetic_corpus, load_corpus_dir, load_difficulties, write_corpus_dir, Corpus,
    SynthSpec, DEFAULT_CHUNK_SIZE, DIFFICULTY_FILE,
};
use kbrl::graph::{build_graph, SimilarityGraph, DEFAULT_TOP_M};
use kbrl::retrieval::{build_text_index, recall_csv, Retriever, TextIndex, LAMBDA_EVQA};
use kbrl::trainer::{
    compare_runs, parse_metrics_csv, run_training, write_metrics, Mode, RunRecord, TrainerConfig,
};
use kbrl::Error;

#[derive(Parser)]
#[command(name = "kbrl", version, about = "Curriculum RL over knowledge-base retrieval")]
struct Cli {
    /// Cap on worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from a JSON spec.
    GenCorpus {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the passage TF-IDF index for a corpus.
    BuildIndex {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
    },
    /// Build the sample similarity graph for a corpus.
    BuildGraph {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_M)]
        top_m: usize,
    },
    /// Run curriculum training with the simulated policy.
    Train(TrainArgs),
    /// Recall@K of the fused retriever.
    EvalRetrieval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = LAMBDA_EVQA)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
        ks: Vec<usize>,
        /// Prebuilt index; built in memory when absent.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare training runs side by side.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, num_args = 1..)]
        compare: Vec<PathBuf>,
        /// Directory for comparison.csv and summary.json; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Prebuilt index; built in memory when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Prebuilt graph; built in memory when absent.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Base-difficulty sidecar; defaults to the one inside the corpus directory.
    #[arg(long)]
    difficulty: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "max-gap")]
    max_gap: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

impl TrainArgs {
    fn config(&self) -> anyhow::Result<TrainerConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainerConfig::from_json(&read(path)?)?,
            None => TrainerConfig::default(),
        };
        if let Some(m) = &self.mode {
            cfg.mode = Mode::parse(m)?;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(seed => seed, iterations => iterations, batch_size => batch_size, tau => tau,
             max_gap => max_gap, window => w, sigma => sigma, lambda => lambda, alpha => alpha);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }.into())
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn load_index(path: Option<&Path>, corpus: &Corpus, chunk_size: usize) -> anyhow::Result<TextIndex> {
    Ok(match path {
        Some(p) => TextIndex::load(p, corpus)?,
        None => build_text_index(corpus, chunk_size)?,
    })
}

fn gen_corpus(spec: &Path, out: &Path) -> anyhow::Result<()> {
    let spec = SynthSpec::from_json(&read(spec)?)?;
    let synth = generate_synthetic_corpus(&spec)?;
    let manifest = write_corpus_dir(&synth.corpus, &synth.difficulties, out)?;
    println!(
        "{} articles, {} samples, corpus hash {}",
        manifest.n_articles, manifest.n_samples, manifest.corpus_hash
    );
    Ok(())
}

fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let corpus = load_corpus_dir(&args.corpus)?;
    let difficulty = args
        .difficulty
        .clone()
        .unwrap_or_else(|| args.corpus.join(DIFFICULTY_FILE));
    let difficulties = load_difficulties(&difficulty)?;
    let index = load_index(args.index.as_deref(), &corpus, cfg.chunk_size)?;
    if index.chunk_size() != cfg.chunk_size {
        return Err(Error::Validation {
            field: "chunk_size".into(),
            message: format!("index uses {}, config asks for {}", index.chunk_size(), cfg.chunk_size),
        }
        .into());
    }
    let graph = match &args.graph {
        Some(p) => SimilarityGraph::load(p, &corpus)?,
        None => build_graph(&corpus, cfg.top_m)?,
    };
    let log = run_training(&cfg, &corpus, &index, &graph, &difficulties)?;
    write_metrics(&log, &args.out)?;
    let s = &log.summary;
    println!(
        "{}: {} iterations, final g={}, ignored groups={}, eval={}",
        cfg.mode.name(),
        log.records.len(),
        s.final_g,
        s.total_ignored,
        s.final_eval_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"))
    );
    Ok(())
}

fn eval_retrieval(
    corpus: &Path,
    lambda: f64,
    ks: &[usize],
    index: Option<&Path>,
    chunk_size: usize,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Validation {
            field: "ks".into(),
            message: "need one or more positive K values".into(),
        }
        .into());
    }
    let corpus = load_corpus_dir(corpus)?;
    let index = load_index(index, &corpus, chunk_size)?;
    let rows = Retriever::new(&corpus, &index, lambda)?.recall_at_k(ks)?;
    let csv = recall_csv(&rows);
    match out {
        Some(p) => write(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn report(run: &Path, compare: &[PathBuf], out: Option<&Path>) -> anyhow::Result<()> {
    let mut runs = Vec::new();
    for dir in std::iter::once(run).chain(compare.iter().map(PathBuf::as_path)) {
        RunRecord::from_json(&read(&dir.join("run.json"))?)
            .with_context(|| format!("run directory {}", dir.display()))?;
        let rows = parse_metrics_csv(&read(&dir.join("metrics.csv"))?)?;
        runs.push((run_name(dir), rows));
    }
    let cmp = compare_runs(&runs)?;
    if let Some(note) = &cmp.mismatch {
        eprintln!("warning: {note}");
    }
    let summary = serde_json::to_string_pretty(&cmp)?;
    match out {
        Some(dir) => {
            write(&dir.join("comparison.csv"), &cmp.table)?;
            write(&dir.join("summary.json"), &summary)?;
        }
        None => print!("{}", cmp.table),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Io { .. }) => 3,
        Some(Error::HashMismatch { .. }) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    match cli.command {
        Command::GenCorpus { spec, out } => gen_corpus(&spec, &out),
        Command::BuildIndex { corpus, out, chunk_size } => {
            let corpus = load_corpus_dir(&corpus)?;
            let index = build_text_index(&corpus, chunk_size)?;
            index.save(&out)?;
            println!("{} passages, index hash {}", index.passage_count(), index.content_hash());
            Ok(())
        }
        Command::BuildGraph { corpus, out, top_m } => {
            let corpus = load_corpus_dir(&corpus)?;
            let graph = build_graph(&corpus, top_m)?;
            graph.save(&out)?;
            println!("{} nodes, graph hash {}", graph.len(), graph.content_hash());
            Ok(())
        }
        Command::Train(args) => train(&args),
        Command::EvalRetrieval { corpus, lambda, ks, index, chunk_size, out } => {
            eval_retrieval(&corpus, lambda, &ks, index.as_deref(), chunk_size, out.as_deref())
        }
        Command::Report { run, compare, out } => {
            if compare.iter().any(|c| c == &run) {
                bail!("--compare repeats --run");
            }
            report(&run, &compare, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
