//! Knowledge base articles, VQA samples, and their on-disk formats.

mod io;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub use io::{
    load_corpus, load_corpus_dir, load_difficulties, parse_articles, parse_difficulties,
    parse_samples, write_corpus, write_corpus_dir, CorpusManifest, ARTICLES_FILE,
    DIFFICULTY_FILE, MANIFEST_FILE, SAMPLES_FILE,
};
pub use synth::{generate_synthetic_corpus, SynthSpec, SyntheticCorpus};

/// Tolerance on the L2 norm of stored feature vectors.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Default passage length in tokens.
pub const DEFAULT_CHUNK_SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub text: String,
    /// Unit vector standing in for the article image feature.
    pub image_vec: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaSample {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub gt_article_id: String,
    pub query_image_vec: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub article_id: String,
    pub index: usize,
    pub text: String,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_unit(field: &str, owner: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(field, format!("{owner}: empty vector")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(field, format!("{owner}: non-finite entry")));
    }
    let norm = l2_norm(v);
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(Error::invalid(
            field,
            format!("{owner}: L2 norm {norm} is not 1"),
        ));
    }
    Ok(())
}

/// Splits an article into consecutive passages of `chunk_size` tokens.
/// Passage text is its tokens joined by single spaces.
pub fn split_passages(article: &Article, chunk_size: usize) -> Result<Vec<Passage>> {
    if chunk_size == 0 {
        return Err(Error::invalid("chunk_size", "must be positive"));
    }
    let tokens = tokenize(&article.text);
    Ok(tokens
        .chunks(chunk_size)
        .enumerate()
        .map(|(index, chunk)| Passage {
            article_id: article.id.clone(),
            index,
            text: chunk.join(" "),
        })
        .collect())
}

/// A validated knowledge base plus its VQA samples.
///
/// Articles are kept sorted by id so every derived artifact is independent of
/// the order they were supplied in. Samples keep their given order.
#[derive(Debug, Clone)]
pub struct Corpus {
    articles: Vec<Article>,
    samples: Vec<VqaSample>,
    article_pos: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.articles == other.articles && self.samples == other.samples
    }
}

impl Corpus {
    pub fn new(mut articles: Vec<Article>, samples: Vec<VqaSample>) -> Result<Self> {
        articles.sort_by(|a, b| a.id.cmp(&b.id));
        let mut dim = None;
        for (i, art) in articles.iter().enumerate() {
            if i > 0 && articles[i - 1].id == art.id {
                return Err(Error::invalid("article id", format!("duplicate {:?}", art.id)));
            }
            if art.text.trim().is_empty() {
                return Err(Error::invalid("text", format!("article {:?} is empty", art.id)));
            }
            check_unit("image_vec", &art.id, &art.image_vec)?;
            match dim {
                None => dim = Some(art.image_vec.len()),
                Some(d) if d != art.image_vec.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: art.image_vec.len(),
                    })
                }
                _ => {}
            }
        }
        let article_pos: HashMap<String, usize> = articles
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id.clone(), i))
            .collect();

        let mut seen = HashSet::new();
        let mut dangling = Vec::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid("sample id", format!("duplicate {:?}", s.id)));
            }
            check_unit("query_image_vec", &s.id, &s.query_image_vec)?;
            if let Some(d) = dim {
                if d != s.query_image_vec.len() {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: s.query_image_vec.len(),
                    });
                }
            }
            if !article_pos.contains_key(&s.gt_article_id) {
                dangling.push(s.id.clone());
            }
        }
        if !dangling.is_empty() {
            return Err(Error::Integrity {
                sample_ids: dangling,
            });
        }
        Ok(Self {
            articles,
            samples,
            article_pos,
        })
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn samples(&self) -> &[VqaSample] {
        &self.samples
    }

    pub fn article(&self, id: &str) -> Option<&Article> {
        self.article_pos.get(id).map(|&i| &self.articles[i])
    }

    /// Position of an article in the id-sorted article list.
    pub fn article_position(&self, id: &str) -> Option<usize> {
        self.article_pos.get(id).copied()
    }

    /// For each sample, the position of its ground-truth article.
    pub fn gt_positions(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| self.article_pos[&s.gt_article_id])
            .collect()
    }

    /// SHA-256 over the canonical line-delimited serialization.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(io::articles_to_jsonl(&self.articles));
        hasher.update(b"\x00");
        hasher.update(io::samples_to_jsonl(&self.samples));
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    pub sample_id: String,
    pub base_difficulty: f64,
}

/// Latent per-sample base difficulty. Only the simulated policy reads it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaseDifficulties(BTreeMap<String, f64>);

impl BaseDifficulties {
    pub fn new(records: impl IntoIterator<Item = DifficultyRecord>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in records {
            if !(0.0..=1.0).contains(&r.base_difficulty) {
                return Err(Error::invalid(
                    "base_difficulty",
                    format!("{}: {} outside [0, 1]", r.sample_id, r.base_difficulty),
                ));
            }
            if map.insert(r.sample_id.clone(), r.base_difficulty).is_some() {
                return Err(Error::invalid(
                    "sample_id",
                    format!("duplicate difficulty for {:?}", r.sample_id),
                ));
            }
        }
        Ok(Self(map))
    }

    pub fn get(&self, sample_id: &str) -> Option<f64> {
        self.0.get(sample_id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = DifficultyRecord> + '_ {
        self.0.iter().map(|(id, &d)| DifficultyRecord {
            sample_id: id.clone(),
            base_difficulty: d,
        })
    }

    /// Difficulties in corpus sample order; every sample must be covered.
    pub fn aligned(&self, corpus: &Corpus) -> Result<Vec<f64>> {
        corpus
            .samples()
            .iter()
            .map(|s| {
                self.get(&s.id).ok_or_else(|| {
                    Error::invalid("difficulty sidecar", format!("no entry for sample {:?}", s.id))
                })
            })
            .collect()
    }
}
