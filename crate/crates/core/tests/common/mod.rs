#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use kbrl::corpus::{
    generate_synthetic_corpus, split_passages, Article, Corpus, SynthSpec, SyntheticCorpus, VqaSample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use kbrl::text::tokenize;
use kbrl::trainer::TrainerConfig;

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn article(id: &str, text: &str, vec: &[f64]) -> Article {
    Article {
        id: id.into(),
        title: id.to_uppercase(),
        text: text.into(),
        image_vec: unit(vec),
    }
}

pub fn sample(id: &str, gt: &str, question: &str, vec: &[f64]) -> VqaSample {
    VqaSample {
        id: id.into(),
        question: question.into(),
        answer: format!("answer {id}"),
        gt_article_id: gt.into(),
        query_image_vec: unit(vec),
        topic_id: None,
    }
}

/// Plain-map TF-IDF, written independently of the library: raw counts times
/// `ln((1+N)/(1+df)) + 1`, then L2-normalized.
pub struct OracleTfIdf {
    df: HashMap<String, usize>,
    n: usize,
}

impl OracleTfIdf {
    pub fn fit(docs: &[Vec<String>]) -> Self {
        let mut df = HashMap::new();
        for d in docs {
            for t in d.iter().collect::<HashSet<_>>() {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Self { df, n: docs.len() }
    }

    pub fn vector(&self, tokens: &[String]) -> HashMap<String, f64> {
        let mut v: HashMap<String, f64> = HashMap::new();
        for t in tokens {
            if let Some(&df) = self.df.get(t) {
                let idf = ((1.0 + self.n as f64) / (1.0 + df as f64)).ln() + 1.0;
                *v.entry(t.clone()).or_insert(0.0) += idf;
            }
        }
        let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.values_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    a.iter().map(|(t, x)| x * b.get(t).unwrap_or(&0.0)).sum()
}

pub fn tokens(text: &str) -> Vec<String> {
    tokenize(text)
}

pub fn small_synth(seed: u64) -> SyntheticCorpus {
    let mut spec = SynthSpec::new(3, 4, 3, seed);
    spec.vocab_size = 300;
    spec.article_tokens = 120;
    generate_synthetic_corpus(&spec).unwrap()
}

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn reference_spec() -> SynthSpec {
    let text = std::fs::read_to_string(configs_dir().join("reference_corpus.json")).unwrap();
    SynthSpec::from_json(&text).unwrap()
}

pub fn reference_config() -> TrainerConfig {
    let text = std::fs::read_to_string(configs_dir().join("reference_train.json")).unwrap();
    TrainerConfig::from_json(&text).unwrap()
}

/// Random directed graph with edge probability `density`, row-normalized.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, density: f64) -> kbrl::graph::SimilarityGraph {
    let mut rows = vec![Vec::new(); n];
    for (i, row) in rows.iter_mut().enumerate() {
        for j in 0..n {
            if j != i && rng.random_bool(density) {
                row.push((j, rng.random_range(0.01..1.0)));
            }
        }
    }
    kbrl::graph::SimilarityGraph::from_rows("random", n.max(1), rows, false)
        .unwrap()
        .row_normalize()
}

/// Observations on a random subset of nodes, values in [0, 1].
pub fn random_obs<R: Rng>(rng: &mut R, n: usize, coverage: f64) -> kbrl::graph::ObservationVector {
    let mut entries = Vec::new();
    for i in 0..n {
        if rng.random_bool(coverage) {
            entries.push((i, rng.random::<f64>()));
        }
    }
    kbrl::graph::ObservationVector::from_entries(n, entries).unwrap()
}

pub const WORDS: [&str; 12] = [
    "river", "stone", "bridge", "castle", "forest", "harbor", "temple", "valley", "tower",
    "garden", "market", "island",
];

/// Ten articles with overlapping vocabulary and spread-out image vectors.
pub fn ten_article_corpus(seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let articles: Vec<_> = (0..10)
        .map(|i| {
            let text: Vec<&str> = (0..30).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            let vec: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            article(&format!("a{i}"), &format!("{} name{i}", text.join(" ")), &vec)
        })
        .collect();
    let samples = (0..20)
        .map(|s| {
            let gt = rng.random_range(0..10);
            let q: Vec<&str> = (0..3).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            let vec: Vec<f64> = articles[gt]
                .image_vec
                .iter()
                .map(|x| x + rng.random_range(-0.8..0.8))
                .collect();
            sample(&format!("s{s}"), &format!("a{gt}"), &q.join(" "), &vec)
        })
        .collect();
    Corpus::new(articles, samples).unwrap()
}

/// Fused score of every article by explicit enumeration of all passages.
pub fn brute_force_fused(corpus: &Corpus, question: &str, qvec: &[f64], lambda: f64) -> Vec<(String, f64)> {
    let mut passages = Vec::new();
    for a in corpus.articles() {
        for p in split_passages(a, 256).unwrap() {
            passages.push((a.id.clone(), tokens(&p.text)));
        }
    }
    let docs: Vec<_> = passages.iter().map(|(_, t)| t.clone()).collect();
    let model = OracleTfIdf::fit(&docs);
    let qv = model.vector(&tokens(question));
    corpus
        .articles()
        .iter()
        .map(|a| {
            let t = passages
                .iter()
                .filter(|(id, _)| id == &a.id)
                .map(|(_, toks)| cosine(&qv, &model.vector(toks)))
                .fold(0.0, f64::max);
            let cos: f64 = qvec.iter().zip(&a.image_vec).map(|(x, y)| x * y).sum();
            (a.id.clone(), lambda * (cos + 1.0) / 2.0 + (1.0 - lambda) * t)
        })
        .collect()
}

