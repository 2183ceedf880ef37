use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{split_passages, Corpus};
use crate::error::{Error, Result};
use crate::text::{tokenize, SparseVec, TfIdfModel};

/// TF-IDF statistics over every passage of every article, with an inverted
/// index from term to the passages containing it.
#[derive(Debug, Clone, PartialEq)]
pub struct TextIndex {
    corpus_hash: String,
    chunk_size: usize,
    model: TfIdfModel,
    passages: Vec<IndexedPassage>,
    /// Article ids in corpus order, each owning a contiguous passage range.
    articles: Vec<(String, Range<usize>)>,
    postings: Vec<Vec<(u32, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexedPassage {
    article_id: String,
    index: usize,
    weights: SparseVec,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    corpus_hash: String,
    chunk_size: usize,
    articles: Vec<String>,
    terms: Vec<String>,
    df: Vec<u32>,
    passages: Vec<IndexedPassage>,
}

pub fn build_text_index(corpus: &Corpus, chunk_size: usize) -> Result<TextIndex> {
    let mut raw = Vec::new();
    for article in corpus.articles() {
        for p in split_passages(article, chunk_size)? {
            raw.push((p.article_id, p.index, tokenize(&p.text)));
        }
    }
    let model = TfIdfModel::fit(raw.iter().map(|(_, _, toks)| toks.as_slice()));
    let passages = raw
        .iter()
        .map(|(article_id, index, toks)| IndexedPassage {
            article_id: article_id.clone(),
            index: *index,
            weights: model.vectorize(toks),
        })
        .collect();
    let article_ids: Vec<String> = corpus.articles().iter().map(|a| a.id.clone()).collect();
    TextIndex::assemble(corpus.content_hash(), chunk_size, model, passages, &article_ids)
}

impl TextIndex {
    fn assemble(
        corpus_hash: String,
        chunk_size: usize,
        model: TfIdfModel,
        passages: Vec<IndexedPassage>,
        article_ids: &[String],
    ) -> Result<Self> {
        let mut articles: Vec<(String, Range<usize>)> =
            article_ids.iter().map(|id| (id.clone(), 0..0)).collect();
        let mut cursor = 0;
        for (id, range) in articles.iter_mut() {
            let start = cursor;
            while cursor < passages.len() && passages[cursor].article_id == *id {
                if passages[cursor].index != cursor - start {
                    return Err(Error::invalid(
                        "index passages",
                        format!("article {id:?} passage {} out of order", passages[cursor].index),
                    ));
                }
                cursor += 1;
            }
            *range = start..cursor;
        }
        if cursor != passages.len() {
            return Err(Error::invalid(
                "index passages",
                format!("passage for {:?} is not grouped with its article", passages[cursor].article_id),
            ));
        }
        let mut postings = vec![Vec::new(); model.terms.len()];
        for (pid, p) in passages.iter().enumerate() {
            for &(term, w) in &p.weights {
                postings[term as usize].push((pid as u32, w));
            }
        }
        Ok(Self {
            corpus_hash,
            chunk_size,
            model,
            passages,
            articles,
            postings,
        })
    }

    pub fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn passage_count(&self) -> usize {
        self.passages.len()
    }

    /// Errors unless the index was built from exactly this corpus.
    pub fn verify(&self, corpus: &Corpus) -> Result<()> {
        let found = corpus.content_hash();
        if found != self.corpus_hash {
            return Err(Error::HashMismatch {
                artifact: "text index".into(),
                expected: self.corpus_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Cosine relevance of every passage to the query.
    pub fn passage_scores(&self, query: &str) -> Vec<f64> {
        let q = self.model.vectorize(&tokenize(query));
        let mut scores = vec![0.0; self.passages.len()];
        for (term, qw) in q {
            for &(pid, pw) in &self.postings[term as usize] {
                scores[pid as usize] += qw * pw;
            }
        }
        scores
    }

    /// Best passage score and its index for each article, in corpus order.
    pub fn article_scores(&self, query: &str) -> Vec<(f64, usize)> {
        let scores = self.passage_scores(query);
        self.articles
            .iter()
            .map(|(_, range)| best_in(&scores, range.clone()))
            .collect()
    }

    /// Relevance of one article: the maximum over its passages.
    pub fn text_score(&self, query: &str, article_id: &str) -> Result<(f64, usize)> {
        let range = self
            .articles
            .iter()
            .find(|(id, _)| id == article_id)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| Error::UnknownArticle(article_id.to_string()))?;
        let q = self.model.vectorize(&tokenize(query));
        let scores: Vec<f64> = self.passages[range.clone()]
            .iter()
            .map(|p| crate::text::dot(&q, &p.weights))
            .collect();
        Ok(best_in(&scores, 0..scores.len()))
    }

    pub fn to_json(&self) -> String {
        let file = IndexFile {
            corpus_hash: self.corpus_hash.clone(),
            chunk_size: self.chunk_size,
            articles: self.articles.iter().map(|(id, _)| id.clone()).collect(),
            terms: self.model.terms.clone(),
            df: self.model.df.clone(),
            passages: self.passages.clone(),
        };
        serde_json::to_string(&file).expect("index serializes")
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Parses a persisted index, checking its internal consistency.
    pub fn from_json(input: &str) -> Result<Self> {
        let file: IndexFile =
            serde_json::from_str(input).map_err(|e| Error::parse("text index", e.line(), e))?;
        if file.chunk_size == 0 {
            return Err(Error::invalid("chunk_size", "must be positive"));
        }
        if file.df.len() != file.terms.len() {
            return Err(Error::DimensionMismatch {
                expected: file.terms.len(),
                found: file.df.len(),
            });
        }
        let unique: HashSet<&str> = file.terms.iter().map(String::as_str).collect();
        if unique.len() != file.terms.len() {
            return Err(Error::invalid("terms", "duplicate term"));
        }
        let n_terms = file.terms.len() as u32;
        for p in &file.passages {
            let mut prev = None;
            for &(term, w) in &p.weights {
                if term >= n_terms || !w.is_finite() || prev.is_some_and(|t| t >= term) {
                    return Err(Error::invalid(
                        "passage weights",
                        format!("bad entry ({term}, {w}) in {:?}", p.article_id),
                    ));
                }
                prev = Some(term);
            }
        }
        if file.articles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("articles", "must be sorted and unique"));
        }
        let model = TfIdfModel::from_parts(file.terms, file.df, file.passages.len());
        Self::assemble(file.corpus_hash, file.chunk_size, model, file.passages, &file.articles)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Loads an index and checks it against `corpus`.
    pub fn load(path: &Path, corpus: &Corpus) -> Result<Self> {
        let input = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let index = Self::from_json(&input)?;
        index.verify(corpus)?;
        let covered = index.articles.iter().map(|(id, _)| id.as_str());
        if !covered.eq(corpus.articles().iter().map(|a| a.id.as_str())) {
            return Err(Error::invalid("text index", "article coverage differs from corpus"));
        }
        Ok(index)
    }
}

/// Max over a range with ties going to the earliest position; an empty range
/// scores zero at passage 0.
fn best_in(scores: &[f64], range: Range<usize>) -> (f64, usize) {
    let start = range.start;
    let mut best = (0.0, 0);
    let mut found = false;
    for i in range {
        if !found || scores[i] > best.0 {
            best = (scores[i], i - start);
            found = true;
        }
    }
    best
}
