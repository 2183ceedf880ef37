//! Clustered synthetic knowledge bases for desk-scale experiments.
//!
//! Articles are grouped into topics. Each topic owns a pool of words and an
//! image centroid, so both text similarity and visual similarity cluster by
//! topic. Every article carries a unique entity-name token, and a latent
//! base difficulty shared by the samples asking about it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Article, BaseDifficulties, Corpus, DifficultyRecord, VqaSample};
use crate::error::{Error, Result};

fn default_article_tokens() -> usize {
    300
}
fn default_question_terms() -> usize {
    4
}
fn default_image_noise() -> f64 {
    0.6
}
fn default_query_noise() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_topics: usize,
    pub articles_per_topic: usize,
    pub samples_per_article: usize,
    pub vocab_size: usize,
    /// Fraction of an article's words drawn from its topic's word pool.
    pub topic_vocab_overlap: f64,
    pub base_difficulty_range: [f64; 2],
    pub vec_dim: usize,
    pub seed: u64,
    #[serde(default = "default_article_tokens")]
    pub article_tokens: usize,
    /// Article words copied into each question.
    #[serde(default = "default_question_terms")]
    pub question_terms: usize,
    /// Spread of article image vectors around their topic centroid.
    #[serde(default = "default_image_noise")]
    pub image_noise: f64,
    /// Spread of query image vectors around their article's vector.
    #[serde(default = "default_query_noise")]
    pub query_noise: f64,
}

impl SynthSpec {
    pub fn new(
        n_topics: usize,
        articles_per_topic: usize,
        samples_per_article: usize,
        seed: u64,
    ) -> Self {
        Self {
            n_topics,
            articles_per_topic,
            samples_per_article,
            vocab_size: 1000,
            topic_vocab_overlap: 0.8,
            base_difficulty_range: [0.2, 0.8],
            vec_dim: 16,
            seed,
            article_tokens: default_article_tokens(),
            question_terms: default_question_terms(),
            image_noise: default_image_noise(),
            query_noise: default_query_noise(),
        }
    }

    pub fn from_json(input: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(input).map_err(|e| Error::parse("synth spec", e.line(), e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_topics", self.n_topics),
            ("articles_per_topic", self.articles_per_topic),
            ("samples_per_article", self.samples_per_article),
            ("vocab_size", self.vocab_size),
            ("vec_dim", self.vec_dim),
            ("article_tokens", self.article_tokens),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.topic_vocab_overlap) {
            return Err(Error::invalid("topic_vocab_overlap", "must lie in [0, 1]"));
        }
        let [lo, hi] = self.base_difficulty_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::invalid(
                "base_difficulty_range",
                "must satisfy 0 <= lo <= hi <= 1",
            ));
        }
        for (field, v) in [("image_noise", self.image_noise), ("query_noise", self.query_noise)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(field, "must be finite and non-negative"));
            }
        }
        let total = self
            .n_topics
            .checked_mul(self.articles_per_topic)
            .and_then(|a| a.checked_mul(self.samples_per_article))
            .and_then(|s| s.checked_mul(self.article_tokens.max(self.vec_dim)));
        if total.is_none_or(|t| t > 1 << 32) {
            return Err(Error::invalid("n_topics", "corpus size is unreasonably large"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub difficulties: BaseDifficulties,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Injective map from an index to a pronounceable lowercase word.
fn word(mut index: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    for _ in 0..3 {
        let syl = index % base;
        index /= base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
    }
    while index > 0 {
        out.push(CONSONANTS[index % CONSONANTS.len()] as char);
        index /= CONSONANTS.len();
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        if let Some(v) = normalize(v) {
            return v;
        }
    }
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = super::l2_norm(&v);
    if norm < 1e-12 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// `center` perturbed by isotropic noise of total scale `noise`, re-normalized.
fn perturb(rng: &mut ChaCha8Rng, center: &[f64], noise: f64) -> Vec<f64> {
    let scale = noise / (center.len() as f64).sqrt();
    loop {
        let v: Vec<f64> = center
            .iter()
            .map(|c| c + scale * gaussian(rng))
            .collect();
        if let Some(v) = normalize(v) {
            return v;
        }
    }
}

pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool_size = (spec.vocab_size / (2 * spec.n_topics)).max(1);
    let [lo, hi] = spec.base_difficulty_range;

    let mut articles = Vec::new();
    let mut samples = Vec::new();
    let mut records = Vec::new();

    for topic in 0..spec.n_topics {
        let topic_id = format!("topic-{topic:03}");
        let centroid = random_unit(&mut rng, spec.vec_dim);
        let pool_start = topic * pool_size;
        for a in 0..spec.articles_per_topic {
            let article_id = format!("art-{topic:03}-{a:03}");
            // Entity names live above the shared vocabulary so they never collide.
            let name = word(spec.vocab_size + topic * spec.articles_per_topic + a);
            let mut body = Vec::with_capacity(spec.article_tokens);
            let mut text = Vec::with_capacity(spec.article_tokens);
            while text.len() < spec.article_tokens {
                if text.len() % 12 == 0 {
                    text.push(name.clone());
                    continue;
                }
                let w = if rng.random::<f64>() < spec.topic_vocab_overlap {
                    word((pool_start + rng.random_range(0..pool_size)) % spec.vocab_size)
                } else {
                    word(rng.random_range(0..spec.vocab_size))
                };
                body.push(w.clone());
                text.push(w);
            }
            let image_vec = perturb(&mut rng, &centroid, spec.image_noise);
            let difficulty = rng.random_range(lo..=hi);

            for s in 0..spec.samples_per_article {
                let sample_id = format!("q-{topic:03}-{a:03}-{s:02}");
                let terms: Vec<&str> = if body.is_empty() {
                    Vec::new()
                } else {
                    (0..spec.question_terms)
                        .map(|_| body[rng.random_range(0..body.len())].as_str())
                        .collect()
                };
                let question = format!("Which {} is shown here?", terms.join(" "));
                let answer = format!(
                    "{} {}",
                    word(rng.random_range(0..spec.vocab_size)),
                    1700 + rng.random_range(0..300)
                );
                samples.push(VqaSample {
                    id: sample_id.clone(),
                    question,
                    answer,
                    gt_article_id: article_id.clone(),
                    query_image_vec: perturb(&mut rng, &image_vec, spec.query_noise),
                    topic_id: Some(topic_id.clone()),
                });
                records.push(DifficultyRecord {
                    sample_id,
                    base_difficulty: difficulty,
                });
            }
            articles.push(Article {
                id: article_id,
                title: format!("{} ({})", name, topic_id),
                text: text.join(" "),
                image_vec,
            });
        }
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::new(articles, samples)?,
        difficulties: BaseDifficulties::new(records)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn counts_follow_spec_arithmetic() {
        let out = generate_synthetic_corpus(&SynthSpec::new(2, 3, 2, 1)).unwrap();
        assert_eq!(out.corpus.articles().len(), 6);
        assert_eq!(out.corpus.samples().len(), 12);
        assert_eq!(out.difficulties.len(), 12);
    }

    #[test]
    fn words_are_unique() {
        let set: HashSet<String> = (0..20_000).map(word).collect();
        assert_eq!(set.len(), 20_000);
        assert!(word(7).chars().all(|c| c.is_ascii_lowercase()));
    }

    #[test]
    fn difficulties_stay_in_range() {
        let mut spec = SynthSpec::new(3, 4, 2, 9);
        spec.base_difficulty_range = [0.6, 0.9];
        let out = generate_synthetic_corpus(&spec).unwrap();
        for r in out.difficulties.records() {
            assert!((0.6..=0.9).contains(&r.base_difficulty));
        }
    }

    #[test]
    fn validation_names_the_field() {
        let mut spec = SynthSpec::new(2, 2, 2, 0);
        spec.base_difficulty_range = [0.9, 0.1];
        match spec.validate().unwrap_err() {
            Error::Validation { field, .. } => assert_eq!(field, "base_difficulty_range"),
            other => panic!("unexpected {other}"),
        }
        spec = SynthSpec::new(0, 2, 2, 0);
        assert!(spec.validate().is_err());
        assert!(SynthSpec::from_json("{\"n_topics\": 1, \"bogus\": 2}").is_err());
    }
}
