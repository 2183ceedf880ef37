//! Tokenization and TF-IDF vectors shared by passage retrieval and the
//! article similarity graph.
//!
//! Tokens are maximal runs of alphanumeric characters, lowercased. Anything
//! else (whitespace, punctuation, symbols) is a boundary.

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Sparse vector as `(term id, weight)` pairs sorted by term id.
pub type SparseVec = Vec<(u32, f64)>;

/// Smoothed inverse document frequency, always strictly positive.
pub fn idf(n_docs: usize, df: u32) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

pub fn dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

pub fn l2_normalize(v: &mut SparseVec) {
    let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in v.iter_mut() {
            *w /= norm;
        }
    }
}

/// Vocabulary plus document frequencies over a fixed set of token documents.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel {
    pub terms: Vec<String>,
    pub df: Vec<u32>,
    pub n_docs: usize,
    lookup: HashMap<String, u32>,
}

impl TfIdfModel {
    pub fn fit<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
            for term in unique {
                *counts.entry(term).or_insert(0) += 1;
            }
        }
        let terms: Vec<String> = counts.keys().map(|t| t.to_string()).collect();
        let df = counts.values().copied().collect();
        Self::from_parts(terms, df, n_docs)
    }

    pub fn from_parts(terms: Vec<String>, df: Vec<u32>, n_docs: usize) -> Self {
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            terms,
            df,
            n_docs,
            lookup,
        }
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.lookup.get(term).copied()
    }

    /// L2-normalized TF-IDF vector; out-of-vocabulary tokens are dropped.
    pub fn vectorize(&self, tokens: &[String]) -> SparseVec {
        let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
        for tok in tokens {
            if let Some(id) = self.term_id(tok) {
                *tf.entry(id).or_insert(0.0) += 1.0;
            }
        }
        let mut v: SparseVec = tf
            .into_iter()
            .map(|(id, count)| (id, count * idf(self.n_docs, self.df[id as usize])))
            .collect();
        l2_normalize(&mut v);
        v
    }
}
