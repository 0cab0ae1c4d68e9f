//! Bag-of-words preprocessing and LDA by collapsed Gibbs sampling.

mod lda;
pub mod synthetic;

pub use lda::{gibbs_sweep, LdaConfig, LdaModel, UniformSource};

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
pub const MIN_TOKEN_CHARS: usize = 3;
pub const MIN_DOC_FREQUENCY: usize = 2;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("no document has any token left after preprocessing")]
    EmptyCorpus,
    #[error("invalid LDA configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus is inconsistent: {0}")]
    InvalidCorpus(String),
    #[error("writing topic tables: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing topic tables: {0}")]
    Io(#[from] std::io::Error),
}

/// Token-id documents with a shared vocabulary and parallel metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Vec<u32>>,
    pub vocabulary: Vec<String>,
    pub doc_ids: Vec<String>,
    pub doc_dates: Vec<Option<NaiveDate>>,
}

impl Corpus {
    pub fn validate(&self) -> Result<(), LdaError> {
        let n = self.documents.len();
        if self.doc_ids.len() != n || self.doc_dates.len() != n {
            return Err(LdaError::InvalidCorpus(format!(
                "{n} documents but {} ids and {} dates",
                self.doc_ids.len(),
                self.doc_dates.len()
            )));
        }
        let v = self.vocabulary.len() as u32;
        if let Some((d, &w)) = self
            .documents
            .iter()
            .enumerate()
            .find_map(|(d, doc)| doc.iter().find(|&&w| w >= v).map(|w| (d, w)))
        {
            return Err(LdaError::InvalidCorpus(format!("document {d} uses token id {w} >= vocabulary size {v}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocabulary.iter().position(|t| t == term).map(|i| i as u32)
    }
}

/// A text waiting to become a corpus document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub date: Option<NaiveDate>,
    pub text: String,
}

impl RawDocument {
    pub fn new(id: impl Into<String>, date: Option<NaiveDate>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            date,
            text: text.into(),
        }
    }
}

pub fn stopwords() -> &'static HashSet<String> {
    static WORDS: OnceLock<HashSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| {
        BUNDLED_STOPWORDS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    })
}

/// Lowercased alphabetic runs of at least three characters that are not
/// stopwords, in text order.
pub fn tokenize(text: &str) -> Vec<String> {
    let stop = stopwords();
    text.to_lowercase()
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| t.chars().count() >= MIN_TOKEN_CHARS && !stop.contains(*t))
        .map(String::from)
        .collect()
}

/// Build a corpus, keeping only terms found in at least two documents.
/// Documents left without tokens are dropped; ids follow first occurrence.
pub fn preprocess(docs: &[RawDocument]) -> Result<Corpus, LdaError> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| tokenize(&d.text)).collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for tokens in &tokenized {
        let unique: HashSet<&str> = tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }

    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut corpus = Corpus {
        documents: Vec::new(),
        vocabulary: Vec::new(),
        doc_ids: Vec::new(),
        doc_dates: Vec::new(),
    };
    for (doc, tokens) in docs.iter().zip(&tokenized) {
        let mut encoded = Vec::new();
        for t in tokens {
            if df[t.as_str()] < MIN_DOC_FREQUENCY {
                continue;
            }
            let next = ids.len() as u32;
            let id = *ids.entry(t.as_str()).or_insert_with(|| {
                corpus.vocabulary.push(t.clone());
                next
            });
            encoded.push(id);
        }
        if encoded.is_empty() {
            continue;
        }
        corpus.documents.push(encoded);
        corpus.doc_ids.push(doc.id.clone());
        corpus.doc_dates.push(doc.date);
    }
    if corpus.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    Ok(corpus)
}
