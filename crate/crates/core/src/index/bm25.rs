use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::InvertedIndex;
use crate::corpus::RunRanking;
use crate::text::Term;

/// Term weights for retrieval. Weights are finite and nonnegative.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedQuery {
    terms: BTreeMap<Term, f64>,
}

impl WeightedQuery {
    pub fn new() -> Self {
        Self::default()
    }

    /// Free-text query: each term weighted by its count.
    pub fn from_counts(terms: &[Term]) -> Self {
        let mut q = Self::new();
        for t in terms {
            *q.terms.entry(t.clone()).or_default() += 1.0;
        }
        q
    }

    /// Keyword query: every distinct term gets weight 1.
    pub fn from_unit(terms: &[Term]) -> Self {
        Self { terms: terms.iter().map(|t| (t.clone(), 1.0)).collect() }
    }

    /// Sets a weight, replacing any previous one. Panics on a negative or
    /// non-finite weight.
    pub fn set(&mut self, term: Term, weight: f64) {
        assert!(weight.is_finite() && weight >= 0.0, "invalid query weight {weight}");
        self.terms.insert(term, weight);
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.terms.get(term).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Term, f64)> + '_ {
        self.terms.iter().map(|(t, &w)| (t, w))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.values().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut q = self.clone();
        for w in q.terms.values_mut() {
            *w *= factor;
        }
        q
    }

    /// True when some positive-weight term occurs in the index.
    pub fn is_retrievable(&self, index: &InvertedIndex) -> bool {
        self.iter().any(|(t, w)| w > 0.0 && index.doc_freq(t.as_str()) > 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub ordinal: u32,
    pub score: f64,
}

/// Okapi BM25 with Robertson idf, no clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Bm25 { k1: 1.2, b: 0.75 }
    }
}

impl Bm25 {
    pub fn idf(&self, n: usize, df: usize) -> f64 {
        ((n as f64 - df as f64 + 0.5) / (df as f64 + 0.5)).ln()
    }

    fn tf_part(&self, tf: u32, dl: u32, avgdl: f64) -> f64 {
        let tf = tf as f64;
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * dl as f64 / avgdl))
    }

    /// Score of one document. Terms are visited in the same order as in
    /// [`Bm25::retrieve`], so both produce bit-identical values.
    pub fn score(&self, index: &InvertedIndex, query: &WeightedQuery, ordinal: u32) -> f64 {
        let n = index.num_docs();
        let dl = index.doc_length(ordinal);
        let mut score = 0.0;
        for (term, w) in query.iter() {
            if w <= 0.0 {
                continue;
            }
            let tf = index.term_frequency(term.as_str(), ordinal);
            if tf == 0 {
                continue;
            }
            let idf = self.idf(n, index.doc_freq(term.as_str()));
            score += w * idf * self.tf_part(tf, dl, index.avg_doc_length());
        }
        score
    }

    /// Top `k` documents containing at least one positive-weight query term,
    /// by score descending then registry id ascending.
    pub fn retrieve(&self, index: &InvertedIndex, query: &WeightedQuery, k: usize) -> Vec<ScoredDoc> {
        let n = index.num_docs();
        let avgdl = index.avg_doc_length();
        let mut acc = vec![0.0f64; n];
        let mut touched = vec![false; n];
        let mut candidates: Vec<u32> = Vec::new();
        for (term, w) in query.iter() {
            if w <= 0.0 {
                continue;
            }
            let postings = index.postings(term.as_str());
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(n, postings.len());
            for p in postings {
                let d = p.doc as usize;
                acc[d] += w * idf * self.tf_part(p.tf, index.doc_length(p.doc), avgdl);
                if !touched[d] {
                    touched[d] = true;
                    candidates.push(p.doc);
                }
            }
        }
        let mut hits: Vec<ScoredDoc> =
            candidates.into_iter().map(|d| ScoredDoc { ordinal: d, score: acc[d as usize] }).collect();
        let order = |a: &ScoredDoc, b: &ScoredDoc| b.score.total_cmp(&a.score).then(a.ordinal.cmp(&b.ordinal));
        if k < hits.len() {
            if k == 0 {
                return Vec::new();
            }
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_by(order);
        hits
    }

    pub fn rank(
        &self,
        index: &InvertedIndex,
        query: &WeightedQuery,
        k: usize,
        topic_id: u32,
        run_tag: &str,
    ) -> RunRanking {
        let hits = self.retrieve(index, query, k);
        RunRanking::from_ordered(
            topic_id,
            run_tag,
            hits.into_iter().map(|h| (index.doc_id(h.ordinal).to_string(), h.score)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::tests::trial;
    use crate::text::{Stopwords, TextPipeline};
    use std::sync::Arc;

    fn bare() -> TextPipeline {
        TextPipeline::new(Arc::new(Stopwords::parse("")))
    }

    fn q(pairs: &[(&str, f64)]) -> WeightedQuery {
        let mut q = WeightedQuery::new();
        for (t, w) in pairs {
            q.set(Term::new(*t).unwrap(), *w);
        }
        q
    }

    #[test]
    fn absent_term_contributes_nothing() {
        let idx = InvertedIndex::build(&[trial("A", "x"), trial("B", "y")], &bare()).unwrap();
        assert_eq!(Bm25::default().score(&idx, &q(&[("y", 1.0)]), 0), 0.0);
        assert_eq!(Bm25::default().score(&idx, &q(&[("zzz", 1.0)]), 0), 0.0);
    }

    #[test]
    fn doubling_weights_doubles_score() {
        let idx = InvertedIndex::build(&[trial("A", "x y"), trial("B", "x x"), trial("C", "z")], &bare()).unwrap();
        let bm = Bm25::default();
        let q1 = q(&[("x", 1.0), ("y", 0.5)]);
        let s1 = bm.score(&idx, &q1, 0);
        let s2 = bm.score(&idx, &q1.scaled(2.0), 0);
        assert!((s2 - 2.0 * s1).abs() < 1e-12);
    }

    #[test]
    fn nothing_matches_gives_empty_ranking() {
        let idx = InvertedIndex::build(&[trial("A", "x")], &bare()).unwrap();
        assert!(Bm25::default().retrieve(&idx, &q(&[("nope", 1.0)]), 10).is_empty());
        assert!(Bm25::default().retrieve(&idx, &q(&[("x", 0.0)]), 10).is_empty());
    }

    #[test]
    fn equal_scores_break_by_registry_id() {
        let idx =
            InvertedIndex::build(&[trial("NCT9", "x y"), trial("NCT1", "x y"), trial("NCT5", "z")], &bare()).unwrap();
        let r = Bm25::default().rank(&idx, &q(&[("x", 1.0)]), 10, 1, "t");
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["NCT1", "NCT9"]);
    }

    #[test]
    fn cutoff_applies() {
        let docs: Vec<_> = (0..10).map(|i| trial(&format!("D{i}"), &"x ".repeat(i + 1))).collect();
        let idx = InvertedIndex::build(&docs, &bare()).unwrap();
        let hits = Bm25::default().retrieve(&idx, &q(&[("x", 1.0)]), 3);
        assert_eq!(hits.len(), 3);
        let all = Bm25::default().retrieve(&idx, &q(&[("x", 1.0)]), 1000);
        assert_eq!(&all[..3], &hits[..]);
    }
}
