use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Article, BaseDifficulties, Corpus, DifficultyRecord, VqaSample};
use crate::error::{Error, Result};

pub const ARTICLES_FILE: &str = "articles.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const DIFFICULTY_FILE: &str = "difficulty.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

fn parse_jsonl<T: DeserializeOwned>(what: &str, input: &str) -> Result<Vec<T>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| serde_json::from_str(line).map_err(|e| Error::parse(what, i + 1, e)))
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_articles(input: &str) -> Result<Vec<Article>> {
    parse_jsonl("articles", input)
}

pub fn parse_samples(input: &str) -> Result<Vec<VqaSample>> {
    parse_jsonl("samples", input)
}

pub fn parse_difficulties(input: &str) -> Result<BaseDifficulties> {
    BaseDifficulties::new(parse_jsonl::<DifficultyRecord>("difficulty sidecar", input)?)
}

pub(super) fn articles_to_jsonl(articles: &[Article]) -> String {
    to_jsonl(articles)
}

pub(super) fn samples_to_jsonl(samples: &[VqaSample]) -> String {
    to_jsonl(samples)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn relabel(err: Error, path: &Path) -> Error {
    match err {
        Error::Parse { line, message, .. } => Error::Parse {
            what: path.display().to_string(),
            line,
            message,
        },
        other => other,
    }
}

pub fn load_corpus(articles_path: &Path, samples_path: &Path) -> Result<Corpus> {
    let articles = parse_articles(&read(articles_path)?).map_err(|e| relabel(e, articles_path))?;
    let samples = parse_samples(&read(samples_path)?).map_err(|e| relabel(e, samples_path))?;
    Corpus::new(articles, samples)
}

pub fn load_corpus_dir(dir: &Path) -> Result<Corpus> {
    load_corpus(&dir.join(ARTICLES_FILE), &dir.join(SAMPLES_FILE))
}

pub fn load_difficulties(path: &Path) -> Result<BaseDifficulties> {
    parse_difficulties(&read(path)?).map_err(|e| relabel(e, path))
}

pub fn write_corpus(corpus: &Corpus, articles_path: &Path, samples_path: &Path) -> Result<()> {
    write(articles_path, &articles_to_jsonl(corpus.articles()))?;
    write(samples_path, &samples_to_jsonl(corpus.samples()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_hash: String,
    pub n_articles: usize,
    pub n_samples: usize,
    pub articles_sha256: String,
    pub samples_sha256: String,
    pub difficulty_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the three data files plus a manifest of their hashes.
pub fn write_corpus_dir(
    corpus: &Corpus,
    difficulties: &BaseDifficulties,
    dir: &Path,
) -> Result<CorpusManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let articles = articles_to_jsonl(corpus.articles());
    let samples = samples_to_jsonl(corpus.samples());
    let records: Vec<DifficultyRecord> = difficulties.records().collect();
    let sidecar = to_jsonl(&records);
    write(&dir.join(ARTICLES_FILE), &articles)?;
    write(&dir.join(SAMPLES_FILE), &samples)?;
    write(&dir.join(DIFFICULTY_FILE), &sidecar)?;
    let manifest = CorpusManifest {
        corpus_hash: corpus.content_hash(),
        n_articles: corpus.articles().len(),
        n_samples: corpus.samples().len(),
        articles_sha256: sha256_hex(articles.as_bytes()),
        samples_sha256: sha256_hex(samples.as_bytes()),
        difficulty_sha256: sha256_hex(sidecar.as_bytes()),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_reports_line_number() {
        let input = "{\"id\":\"a\",\"title\":\"t\",\"text\":\"x\",\"image_vec\":[1.0]}\n\nnot json\n";
        match parse_articles(input).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_samples_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let arts: String = ["a", "b", "c"]
            .iter()
            .map(|id| format!("{{\"id\":\"{id}\",\"title\":\"t\",\"text\":\"hello {id}\",\"image_vec\":[0.0,1.0]}}\n"))
            .collect();
        fs::write(dir.path().join(ARTICLES_FILE), arts).unwrap();
        fs::write(dir.path().join(SAMPLES_FILE), "").unwrap();
        let corpus = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(corpus.articles().len(), 3);
        assert!(corpus.samples().is_empty());
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_corpus_dir(dir.path()), Err(Error::Io { .. })));
    }
}
