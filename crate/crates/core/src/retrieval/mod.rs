//! Fused visual + textual retrieval and the controllable retrieval
//! modification used to generate curriculum data.
//!
//! Every article gets a visual score `V = (cos + 1) / 2` from the query and
//! article image vectors, and a textual score `T` equal to its best passage's
//! TF-IDF cosine with the question. The fused score is
//! `s = λ·V + (1 − λ)·T`. Rankings sort by fused score descending with ties
//! going to the smaller article id.
//!
//! A [`RetrievalMod`] `(k, γ)` for gap level `g` controls how hard the
//! generated sample is: fewer candidates and a guaranteed ground truth at low
//! levels, the natural top `G − 1` at the highest.

mod index;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, VqaSample};
use crate::error::{Error, Result};

pub use index::{build_text_index, TextIndex};

/// Reference fusion weight for the EVQA-like profile.
pub const LAMBDA_EVQA: f64 = 0.985;
/// Reference fusion weight for the InfoSeek-like profile.
pub const LAMBDA_INFOSEEK: f64 = 0.997;

const VISUAL_NORM_TOLERANCE: f64 = 1e-4;

pub fn visual_score(query_vec: &[f64], article_vec: &[f64]) -> Result<f64> {
    if query_vec.len() != article_vec.len() {
        return Err(Error::DimensionMismatch {
            expected: query_vec.len(),
            found: article_vec.len(),
        });
    }
    for v in [query_vec, article_vec] {
        let norm = crate::corpus::l2_norm(v);
        if !norm.is_finite() || (norm - 1.0).abs() > VISUAL_NORM_TOLERANCE {
            return Err(Error::invalid("image vector", format!("norm {norm} is not 1")));
        }
    }
    let cos: f64 = query_vec.iter().zip(article_vec).map(|(a, b)| a * b).sum();
    Ok(((cos + 1.0) / 2.0).clamp(0.0, 1.0))
}

pub fn fuse_scores(v: f64, t: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid("visual score", format!("{v} outside [0, 1]")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("text score", format!("{t} is not a finite non-negative value")));
    }
    Ok(lambda * v + (1.0 - lambda) * t)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda", format!("{lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Candidate count `k` and ground-truth enforcement `gamma` for gap level `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalMod {
    pub g: usize,
    pub k: usize,
    pub gamma: bool,
}

/// Levels 0 and 1 retrieve only the ground truth, levels strictly between 1
/// and `max_gap` use `k = g` with the ground truth enforced, and `max_gap`
/// uses the natural top `max_gap − 1`.
pub fn phi_for_gap(g: usize, max_gap: usize) -> Result<RetrievalMod> {
    if max_gap < 2 {
        return Err(Error::invalid("max_gap", "must be at least 2"));
    }
    if g > max_gap {
        return Err(Error::invalid("gap level", format!("{g} exceeds {max_gap}")));
    }
    let (k, gamma) = match g {
        0 | 1 => (1, true),
        g if g == max_gap => (max_gap - 1, false),
        g => (g, true),
    };
    Ok(RetrievalMod { g, k, gamma })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEntry {
    pub article_id: String,
    pub passage_index: usize,
    pub score: f64,
    pub v_score: f64,
    pub t_score: f64,
    /// Placed by ground-truth enforcement rather than earned by rank.
    pub injected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSet {
    pub entries: Vec<RetrievedEntry>,
    pub lambda: f64,
}

impl RetrievedSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, article_id: &str) -> bool {
        self.entries.iter().any(|e| e.article_id == article_id)
    }
}

fn rank_order(a: &RetrievedEntry, b: &RetrievedEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.article_id.cmp(&b.article_id))
}

/// Applies `(k, γ)` to a full natural ranking.
///
/// With γ set and the ground truth outside the natural top `k`, the lowest
/// ranked of those `k` is replaced by the ground truth entry, which then sits
/// at the rank its fused score earns.
pub fn modify_ranking(
    ranking: &[RetrievedEntry],
    gt_article_id: &str,
    modification: RetrievalMod,
    lambda: f64,
) -> Result<RetrievedSet> {
    let k = modification.k;
    if k == 0 || k > ranking.len() {
        return Err(Error::invalid(
            "k",
            format!("{k} candidates requested from {} articles", ranking.len()),
        ));
    }
    let mut entries: Vec<RetrievedEntry> = ranking[..k].to_vec();
    if modification.gamma && !entries.iter().any(|e| e.article_id == gt_article_id) {
        let mut gt = ranking
            .iter()
            .find(|e| e.article_id == gt_article_id)
            .cloned()
            .ok_or_else(|| Error::UnknownArticle(gt_article_id.to_string()))?;
        gt.injected = true;
        entries.pop();
        entries.push(gt);
        entries.sort_by(rank_order);
    }
    Ok(RetrievedSet { entries, lambda })
}

/// Scores and ranks corpus articles for a query under a fixed `λ`.
#[derive(Debug, Clone, Copy)]
pub struct Retriever<'a> {
    corpus: &'a Corpus,
    index: &'a TextIndex,
    lambda: f64,
}

impl<'a> Retriever<'a> {
    pub fn new(corpus: &'a Corpus, index: &'a TextIndex, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        index.verify(corpus)?;
        Ok(Self {
            corpus,
            index,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    /// Every article, best first.
    pub fn rank_all(&self, sample: &VqaSample) -> Result<Vec<RetrievedEntry>> {
        let text = self.index.article_scores(&sample.question);
        let mut entries = self
            .corpus
            .articles()
            .iter()
            .zip(text)
            .map(|(article, (t, passage_index))| {
                let v = visual_score(&sample.query_image_vec, &article.image_vec)?;
                Ok(RetrievedEntry {
                    article_id: article.id.clone(),
                    passage_index,
                    score: fuse_scores(v, t, self.lambda)?,
                    v_score: v,
                    t_score: t,
                    injected: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        entries.sort_by(rank_order);
        Ok(entries)
    }

    pub fn retrieve(&self, sample: &VqaSample, k: usize) -> Result<RetrievedSet> {
        let n = self.corpus.articles().len();
        if k == 0 || k > n {
            return Err(Error::invalid("k", format!("{k} not in 1..={n}")));
        }
        let mut entries = self.rank_all(sample)?;
        entries.truncate(k);
        Ok(RetrievedSet {
            entries,
            lambda: self.lambda,
        })
    }

    pub fn apply_modification(
        &self,
        sample: &VqaSample,
        modification: RetrievalMod,
    ) -> Result<RetrievedSet> {
        let ranking = self.rank_all(sample)?;
        modify_ranking(&ranking, &sample.gt_article_id, modification, self.lambda)
    }

    /// Natural rankings for every sample, in sample order.
    pub fn rank_samples(&self) -> Result<Vec<Vec<RetrievedEntry>>> {
        self.corpus
            .samples()
            .par_iter()
            .map(|s| self.rank_all(s))
            .collect()
    }

    /// Fraction of samples whose ground truth lands in the unmodified top `K`.
    /// A `K` at or above the article count covers the whole ranking.
    pub fn recall_at_k(&self, ks: &[usize]) -> Result<Vec<RecallRow>> {
        if ks.is_empty() {
            return Err(Error::invalid("ks", "empty list"));
        }
        if ks.contains(&0) {
            return Err(Error::invalid("ks", "K must be positive"));
        }
        let samples = self.corpus.samples();
        if samples.is_empty() {
            return Err(Error::invalid("samples", "recall needs at least one sample"));
        }
        let ranks: Vec<usize> = samples
            .par_iter()
            .map(|s| {
                let ranking = self.rank_all(s)?;
                Ok(ranking
                    .iter()
                    .position(|e| e.article_id == s.gt_article_id)
                    .expect("corpus integrity guarantees the ground truth is ranked"))
            })
            .collect::<Result<_>>()?;
        Ok(ks
            .iter()
            .map(|&k| RecallRow {
                k,
                recall: ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64,
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub k: usize,
    pub recall: f64,
}

pub fn recall_csv(rows: &[RecallRow]) -> String {
    let mut out = String::from("K,recall\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.k, r.recall));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SynthSpec};

    #[test]
    fn visual_score_endpoints() {
        let a = [1.0, 0.0];
        assert_eq!(visual_score(&a, &a).unwrap(), 1.0);
        assert_eq!(visual_score(&a, &[-1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(visual_score(&a, &[0.0, 1.0]).unwrap(), 0.5);
        assert!(visual_score(&a, &[2.0, 0.0]).is_err());
        assert!(visual_score(&a, &[1.0]).is_err());
    }

    #[test]
    fn fuse_scores_examples() {
        assert_eq!(fuse_scores(0.3, 7.0, 1.0).unwrap(), 0.3);
        assert!((fuse_scores(0.5, 2.0, LAMBDA_EVQA).unwrap() - 0.5225).abs() < 1e-12);
        assert!(fuse_scores(0.5, 1.0, 1.5).is_err());
        assert!(fuse_scores(0.5, 1.0, -0.1).is_err());
    }

    #[test]
    fn phi_table_for_g6() {
        let table: Vec<(usize, bool)> = (0..=6)
            .map(|g| {
                let m = phi_for_gap(g, 6).unwrap();
                (m.k, m.gamma)
            })
            .collect();
        assert_eq!(
            table,
            vec![(1, true), (1, true), (2, true), (3, true), (4, true), (5, true), (5, false)]
        );
        assert!(phi_for_gap(7, 6).is_err());
        assert!(phi_for_gap(0, 1).is_err());
    }

    #[test]
    fn modification_examples() {
        let out = generate_synthetic_corpus(&SynthSpec::new(3, 4, 2, 5)).unwrap();
        let index = build_text_index(&out.corpus, 256).unwrap();
        let r = Retriever::new(&out.corpus, &index, LAMBDA_EVQA).unwrap();
        for s in out.corpus.samples() {
            let only_gt = r
                .apply_modification(s, RetrievalMod { g: 0, k: 1, gamma: true })
                .unwrap();
            assert_eq!(only_gt.len(), 1);
            assert_eq!(only_gt.entries[0].article_id, s.gt_article_id);
            let plain = r
                .apply_modification(s, RetrievalMod { g: 3, k: 3, gamma: false })
                .unwrap();
            assert_eq!(plain, r.retrieve(s, 3).unwrap());
        }
    }

    #[test]
    fn k_bounds_are_enforced() {
        let out = generate_synthetic_corpus(&SynthSpec::new(1, 3, 1, 5)).unwrap();
        let index = build_text_index(&out.corpus, 256).unwrap();
        let r = Retriever::new(&out.corpus, &index, 0.5).unwrap();
        let s = &out.corpus.samples()[0];
        assert!(r.retrieve(s, 4).is_err());
        assert!(r.retrieve(s, 0).is_err());
        assert_eq!(r.retrieve(s, 3).unwrap().len(), 3);
        assert!(r.recall_at_k(&[0]).is_err());
        assert!(r.recall_at_k(&[]).is_err());
        assert_eq!(r.recall_at_k(&[3]).unwrap()[0].recall, 1.0);
        assert_eq!(r.recall_at_k(&[50]).unwrap()[0].recall, 1.0);
    }

    #[test]
    fn recall_csv_format() {
        let rows = [RecallRow { k: 1, recall: 0.5 }, RecallRow { k: 5, recall: 1.0 }];
        assert_eq!(recall_csv(&rows), "K,recall\n1,0.5\n5,1\n");
    }
}
