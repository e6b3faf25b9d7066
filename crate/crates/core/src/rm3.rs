//! RM3 pseudo-relevance feedback over BM25 first-pass scores.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::index::{Bm25, InvertedIndex, WeightedQuery};
use crate::text::{Stopwords, Term};

/// Floor applied when first-pass scores have to be shifted positive.
pub const SCORE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rm3Config {
    pub fb_docs: usize,
    pub fb_terms: usize,
    pub lambda_orig: f64,
}

impl Default for Rm3Config {
    fn default() -> Self {
        Rm3Config { fb_docs: 10, fb_terms: 20, lambda_orig: 0.5 }
    }
}

impl Rm3Config {
    pub fn validate(&self) -> Result<(), String> {
        if self.fb_docs == 0 || self.fb_terms == 0 {
            return Err("fb_docs and fb_terms must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.lambda_orig) {
            return Err(format!("lambda must lie in [0, 1], got {}", self.lambda_orig));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rm3Expansion {
    pub query: WeightedQuery,
    /// Number of feedback documents actually used.
    pub feedback_docs: usize,
    /// Expansion terms with their normalized relevance-model weights, best first.
    pub expansion_terms: Vec<(Term, f64)>,
    pub diagnostics: Vec<String>,
}

pub struct Rm3 {
    config: Rm3Config,
    bm25: Bm25,
    excluded: HashSet<String>,
}

impl Rm3 {
    /// Stopwords and their stems are never used as expansion terms.
    pub fn new(config: Rm3Config, bm25: Bm25, stopwords: &Stopwords) -> Self {
        Rm3 { config, bm25, excluded: stopwords.stems() }
    }

    pub fn config(&self) -> &Rm3Config {
        &self.config
    }

    pub fn expand(&self, index: &InvertedIndex, query: &WeightedQuery) -> Rm3Expansion {
        let hits = self.bm25.retrieve(index, query, self.config.fb_docs);
        if hits.is_empty() {
            return Rm3Expansion {
                query: query.clone(),
                feedback_docs: 0,
                expansion_terms: Vec::new(),
                diagnostics: vec!["empty first-pass ranking; query left unexpanded".into()],
            };
        }

        let mut diagnostics = Vec::new();
        let min = hits.iter().map(|h| h.score).fold(f64::INFINITY, f64::min);
        let shift = if min <= 0.0 {
            diagnostics.push(format!("feedback scores shifted by {:.6}", SCORE_EPSILON - min));
            SCORE_EPSILON - min
        } else {
            0.0
        };
        let total: f64 = hits.iter().map(|h| h.score + shift).sum();

        let mut mass: BTreeMap<&Term, f64> = BTreeMap::new();
        for h in &hits {
            let u = (h.score + shift) / total;
            let dl = index.doc_length(h.ordinal);
            if dl == 0 {
                continue;
            }
            for (term, tf) in index.doc_terms(h.ordinal) {
                if self.excluded.contains(term.as_str()) {
                    continue;
                }
                *mass.entry(term).or_default() += u * tf as f64 / dl as f64;
            }
        }
        let mut ranked: Vec<(&Term, f64)> = mass.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(self.config.fb_terms);
        let exp_total: f64 = ranked.iter().map(|(_, p)| p).sum();
        let expansion_terms: Vec<(Term, f64)> = if exp_total > 0.0 {
            ranked.into_iter().map(|(t, p)| (t.clone(), p / exp_total)).collect()
        } else {
            diagnostics.push("no expansion terms survived filtering".into());
            Vec::new()
        };

        // All weight on the original query: return it as given so scores stay
        // bit-identical instead of being rescaled.
        if self.config.lambda_orig == 1.0 {
            return Rm3Expansion { query: query.clone(), feedback_docs: hits.len(), expansion_terms, diagnostics };
        }
        let orig_total = query.total_weight();
        let lambda = if expansion_terms.is_empty() { 1.0 } else { self.config.lambda_orig };
        let mut combined: BTreeMap<Term, f64> = BTreeMap::new();
        for (t, w) in query.iter() {
            if w > 0.0 {
                *combined.entry(t.clone()).or_default() += lambda * w / orig_total;
            }
        }
        for (t, p) in &expansion_terms {
            *combined.entry(t.clone()).or_default() += (1.0 - lambda) * p;
        }
        let mut out = WeightedQuery::new();
        for (t, w) in combined {
            if w > 0.0 {
                out.set(t, w);
            }
        }
        Rm3Expansion { query: out, feedback_docs: hits.len(), expansion_terms, diagnostics }
    }
}
