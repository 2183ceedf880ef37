//! Sample similarity graph and label propagation of observed rewards.
//!
//! Nodes are VQA samples in corpus order. The weight of edge `i -> j` is the
//! TF-IDF cosine between the two samples' ground-truth articles; each node
//! keeps only its `m` strongest positive edges, so the graph is directed.
//!
//! Propagation iterates `A_new = α·K·A_pred + (1 − α)·A` from `A_pred = A`
//! and stops once `‖A_new − A_pred‖∞ < ε` or after `T` rounds. For `α < 1`
//! and row-stochastic `K` this converges to the solution of
//! `(I − α·K)·A* = (1 − α)·A`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::{dot, tokenize, SparseVec, TfIdfModel};

pub const DEFAULT_TOP_M: usize = 100;

/// Tolerance on row sums of a normalized graph.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Dense pairwise TF-IDF cosine between articles, indexed by article position.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleSimilarity {
    n: usize,
    values: Vec<f64>,
}

impl ArticleSimilarity {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

pub fn article_tfidf_similarity(corpus: &Corpus) -> ArticleSimilarity {
    let docs: Vec<Vec<String>> = corpus.articles().iter().map(|a| tokenize(&a.text)).collect();
    let model = TfIdfModel::fit(docs.iter().map(Vec::as_slice));
    let vecs: Vec<SparseVec> = docs.iter().map(|d| model.vectorize(d)).collect();
    let n = vecs.len();
    let values = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            let vecs = &vecs;
            (0..n).map(move |b| {
                if a == b {
                    1.0
                } else {
                    dot(&vecs[a], &vecs[b]).clamp(0.0, 1.0)
                }
            })
        })
        .collect();
    ArticleSimilarity { n, values }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    corpus_hash: String,
    top_m: usize,
    rows: Vec<Vec<(usize, f64)>>,
    row_normalized: bool,
}

/// Keeps, for each sample, its `m` strongest positive-weight neighbors with
/// ties going to the smaller sample index.
pub fn build_graph(corpus: &Corpus, m: usize) -> Result<SimilarityGraph> {
    if m == 0 {
        return Err(Error::invalid("top_m", "must be at least 1"));
    }
    let sim = article_tfidf_similarity(corpus);
    let gt = corpus.gt_positions();
    let rows = (0..gt.len())
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<(usize, f64)> = (0..gt.len())
                .filter(|&j| j != i)
                .map(|j| (j, sim.get(gt[i], gt[j])))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            row.truncate(m);
            row
        })
        .collect();
    Ok(SimilarityGraph {
        corpus_hash: corpus.content_hash(),
        top_m: m,
        rows,
        row_normalized: false,
    })
}

#[derive(Serialize, Deserialize)]
struct GraphHeader {
    corpus_hash: String,
    n: usize,
    top_m: usize,
    row_normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct GraphRow {
    node: usize,
    neighbors: Vec<(usize, f64)>,
}

impl SimilarityGraph {
    /// Builds a graph from explicit rows, checking the structural invariants.
    pub fn from_rows(
        corpus_hash: impl Into<String>,
        top_m: usize,
        rows: Vec<Vec<(usize, f64)>>,
        row_normalized: bool,
    ) -> Result<Self> {
        let n = rows.len();
        if top_m == 0 {
            return Err(Error::invalid("top_m", "must be at least 1"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() > top_m {
                return Err(Error::invalid("neighbors", format!("node {i} has {} > {top_m} edges", row.len())));
            }
            for &(j, w) in row {
                if j >= n || j == i {
                    return Err(Error::invalid("neighbors", format!("node {i} has bad neighbor {j}")));
                }
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::invalid("weight", format!("node {i} has weight {w}")));
                }
            }
            if row_normalized {
                let sum: f64 = row.iter().map(|e| e.1).sum();
                if sum != 0.0 && (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::invalid("weight", format!("node {i} row sums to {sum}")));
                }
            }
        }
        Ok(Self {
            corpus_hash: corpus_hash.into(),
            top_m,
            rows,
            row_normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn top_m(&self) -> usize {
        self.top_m
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.rows[node]
    }

    pub fn is_row_normalized(&self) -> bool {
        self.row_normalized
    }

    pub fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }

    pub fn verify(&self, corpus: &Corpus) -> Result<()> {
        let found = corpus.content_hash();
        if found != self.corpus_hash {
            return Err(Error::HashMismatch {
                artifact: "similarity graph".into(),
                expected: self.corpus_hash.clone(),
                found,
            });
        }
        if self.len() != corpus.samples().len() {
            return Err(Error::DimensionMismatch {
                expected: corpus.samples().len(),
                found: self.len(),
            });
        }
        Ok(())
    }

    /// Divides each row by its sum. Rows with no weight stay empty.
    pub fn row_normalize(mut self) -> Self {
        if self.row_normalized {
            return self;
        }
        for row in &mut self.rows {
            let sum: f64 = row.iter().map(|e| e.1).sum();
            if sum > 0.0 {
                for e in row.iter_mut() {
                    e.1 /= sum;
                }
            }
        }
        self.row_normalized = true;
        self
    }

    /// `out = K · x`
    fn multiply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(j, w)| w * x[j]).sum();
        }
    }

    pub fn to_jsonl(&self) -> String {
        let header = GraphHeader {
            corpus_hash: self.corpus_hash.clone(),
            n: self.len(),
            top_m: self.top_m,
            row_normalized: self.row_normalized,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for (node, row) in self.rows.iter().enumerate() {
            let line = GraphRow {
                node,
                neighbors: row.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn from_jsonl(input: &str) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse("graph", 1, "missing header"))?;
        let header: GraphHeader =
            serde_json::from_str(header).map_err(|e| Error::parse("graph", hline + 1, e))?;
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row: GraphRow =
                serde_json::from_str(line).map_err(|e| Error::parse("graph", i + 1, e))?;
            if row.node != rows.len() {
                return Err(Error::parse("graph", i + 1, format!("expected node {}, found {}", rows.len(), row.node)));
            }
            if rows.len() == header.n {
                return Err(Error::parse("graph", i + 1, "more rows than the header declares"));
            }
            rows.push(row.neighbors);
        }
        if rows.len() != header.n {
            return Err(Error::DimensionMismatch {
                expected: header.n,
                found: rows.len(),
            });
        }
        Self::from_rows(header.corpus_hash, header.top_m, rows, header.row_normalized)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, corpus: &Corpus) -> Result<Self> {
        let input = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let graph = Self::from_jsonl(&input)?;
        graph.verify(corpus)?;
        Ok(graph)
    }
}

/// Observed rewards `A` with a mask; unobserved entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl ObservationVector {
    pub fn new(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            observed: vec![false; n],
        }
    }

    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut obs = Self::new(n);
        for (i, v) in entries {
            obs.observe(i, v)?;
        }
        Ok(obs)
    }

    pub fn observe(&mut self, node: usize, value: f64) -> Result<()> {
        if node >= self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                found: node + 1,
            });
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid("observation", format!("{value} outside [0, 1]")));
        }
        self.values[node] = value;
        self.observed[node] = true;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub alpha: f64,
    pub max_iters: usize,
    pub epsilon: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            max_iters: 10,
            epsilon: 1e-4,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", "must lie in [0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("prop_T", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("prop_eps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationTrace {
    pub values: Vec<f64>,
    /// `‖A_new − A_pred‖∞` for every round executed.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

pub fn propagate(
    graph: &SimilarityGraph,
    obs: &ObservationVector,
    cfg: &PropagationConfig,
) -> Result<Vec<f64>> {
    propagate_traced(graph, obs, cfg).map(|t| t.values)
}

pub fn propagate_traced(
    graph: &SimilarityGraph,
    obs: &ObservationVector,
    cfg: &PropagationConfig,
) -> Result<PropagationTrace> {
    cfg.validate()?;
    if !graph.row_normalized {
        return Err(Error::invalid("graph", "propagation needs a row-normalized graph"));
    }
    if graph.len() != obs.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            found: obs.len(),
        });
    }
    let base = obs.values();
    let mut pred = base.to_vec();
    let mut next = vec![0.0; pred.len()];
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        graph.multiply(&pred, &mut next);
        let mut residual: f64 = 0.0;
        for ((n, &p), &a) in next.iter_mut().zip(&pred).zip(base) {
            *n = cfg.alpha * *n + (1.0 - cfg.alpha) * a;
            residual = residual.max((*n - p).abs());
        }
        residuals.push(residual);
        if residual < cfg.epsilon {
            converged = true;
            break;
        }
        std::mem::swap(&mut pred, &mut next);
    }
    Ok(PropagationTrace {
        values: pred,
        residuals,
        converged,
    })
}

/// How propagated values are read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// The propagated vector as is. Unobserved nodes shrink toward zero.
    #[default]
    Raw,
    /// Propagated values divided by the propagated observation mask, so each
    /// node gets a similarity-weighted average of the observations it reaches.
    /// Nodes no observation reaches read 0.
    Normalized,
}

pub fn propagate_with(
    graph: &SimilarityGraph,
    obs: &ObservationVector,
    cfg: &PropagationConfig,
    readout: Readout,
) -> Result<Vec<f64>> {
    let values = propagate(graph, obs, cfg)?;
    if readout == Readout::Raw {
        return Ok(values);
    }
    let mask = ObservationVector::from_entries(
        obs.len(),
        obs.observed_mask().iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| (i, 1.0)),
    )?;
    let mass = propagate(graph, &mask, cfg)?;
    Ok(values
        .iter()
        .zip(&mass)
        .map(|(&v, &m)| if m > MASS_FLOOR { (v / m).clamp(0.0, 1.0) } else { 0.0 })
        .collect())
}

const MASS_FLOOR: f64 = 1e-12;

/// Exact fixed point of the propagation by dense LU solve. Meant for small
/// graphs as an independent check on [`propagate`].
pub fn fixed_point_oracle(
    graph: &SimilarityGraph,
    obs: &ObservationVector,
    alpha: f64,
) -> Result<Vec<f64>> {
    if graph.len() != obs.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            found: obs.len(),
        });
    }
    let n = graph.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for &(j, w) in graph.neighbors(i) {
            m[(i, j)] -= alpha * w;
        }
    }
    let b = DVector::from_iterator(n, obs.values().iter().map(|a| (1.0 - alpha) * a));
    m.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or(Error::Singular)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub held_out: usize,
    pub propagated_mse: f64,
    pub baseline_mse: f64,
}

/// Hides a random `fraction` of the observed values, propagates the rest and
/// scores the hidden ones against the mean of the visible ones.
pub fn holdout_evaluation<R: rand::Rng + ?Sized>(
    graph: &SimilarityGraph,
    observed: &[Option<f64>],
    fraction: f64,
    cfg: &PropagationConfig,
    readout: Readout,
    rng: &mut R,
) -> Result<HoldoutReport> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("fraction", "must lie in (0, 1)"));
    }
    let seen: Vec<usize> = (0..observed.len()).filter(|&i| observed[i].is_some()).collect();
    let n_hidden = ((seen.len() as f64) * fraction).round() as usize;
    if n_hidden == 0 || n_hidden == seen.len() {
        return Err(Error::invalid("observed", "too few observations to split"));
    }
    let mut hidden = vec![false; observed.len()];
    for k in rand::seq::index::sample(rng, seen.len(), n_hidden) {
        hidden[seen[k]] = true;
    }
    let visible = seen.iter().filter(|&&i| !hidden[i]).map(|&i| (i, observed[i].expect("seen")));
    let obs = ObservationVector::from_entries(observed.len(), visible)?;
    let visible_mean = {
        let v: Vec<f64> = seen.iter().filter(|&&i| !hidden[i]).map(|&i| obs.values()[i]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let pred = propagate_with(graph, &obs, cfg, readout)?;
    let (mut prop_se, mut base_se) = (0.0, 0.0);
    for &i in seen.iter().filter(|&&i| hidden[i]) {
        let truth = observed[i].expect("seen");
        prop_se += (pred[i] - truth).powi(2);
        base_se += (visible_mean - truth).powi(2);
    }
    Ok(HoldoutReport {
        held_out: n_hidden,
        propagated_mse: prop_se / n_hidden as f64,
        baseline_mse: base_se / n_hidden as f64,
    })
}
