//! Text normalization shared by indexing and querying.
//!
//! The pipeline is `tokenize -> drop stopwords -> Porter stem`. Stopword removal
//! runs on the raw lowercase token, before stemming.

mod porter;

use std::borrow::Borrow;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use porter::stem;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords/terrier-en.txt");

/// A normalized index/query term: lowercase ASCII letters and digits, stemmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Term(String);

impl Term {
    /// Wraps an already-normalized string. Returns `None` if it is empty or
    /// contains anything other than lowercase ASCII letters and digits.
    pub fn new(s: impl Into<String>) -> Option<Self> {
        let s = s.into();
        if !s.is_empty() && s.bytes().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()) {
            Some(Term(s))
        } else {
            None
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Term {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases and splits on every character that is not an ASCII letter or digit.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_ascii_lowercase()).collect()
}

/// A stoplist: one lowercase word per line, `#` starts a comment.
#[derive(Debug, Clone)]
pub struct Stopwords {
    words: HashSet<String>,
    fingerprint: [u8; 32],
}

impl Stopwords {
    pub fn parse(text: &str) -> Self {
        let words: HashSet<String> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        let mut sorted: Vec<&String> = words.iter().collect();
        sorted.sort();
        let mut h = Sha256::new();
        for w in sorted {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        Stopwords { words, fingerprint: h.finalize().into() }
    }

    pub fn from_path(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// The Terrier English stoplist shipped with this crate.
    pub fn bundled() -> Arc<Stopwords> {
        static BUNDLED: OnceLock<Arc<Stopwords>> = OnceLock::new();
        BUNDLED.get_or_init(|| Arc::new(Stopwords::parse(BUNDLED_STOPWORDS))).clone()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// SHA-256 over the sorted word list; identifies the list independent of file layout.
    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    /// Every stopword together with its stem.
    pub fn stems(&self) -> HashSet<String> {
        self.words.iter().flat_map(|w| [w.clone(), stem(w)]).collect()
    }
}

/// Tokenizer + stoplist + stemmer.
#[derive(Debug, Clone)]
pub struct TextPipeline {
    stopwords: Arc<Stopwords>,
}

impl Default for TextPipeline {
    fn default() -> Self {
        TextPipeline::new(Stopwords::bundled())
    }
}

impl TextPipeline {
    pub fn new(stopwords: Arc<Stopwords>) -> Self {
        TextPipeline { stopwords }
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }

    /// Full pipeline; order and duplicates are preserved.
    pub fn process(&self, text: &str) -> Vec<Term> {
        tokenize(text).into_iter().filter(|t| !self.stopwords.contains(t)).map(|t| Term(stem(&t))).collect()
    }

    /// Splits every keyword (possibly a multi-word phrase) into unigrams and
    /// returns their terms with duplicates removed, first occurrence kept.
    pub fn fold_phrases<S: AsRef<str>>(&self, keywords: &[S]) -> Vec<Term> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for kw in keywords {
            for term in self.process(kw.as_ref()) {
                if seen.insert(term.clone()) {
                    out.push(term);
                }
            }
        }
        out
    }
}
