//! Inverted index over processed trial text, Okapi BM25 ranking, and the
//! on-disk index format.

mod bm25;
mod store;

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::ClinicalTrial;
use crate::text::{Term, TextPipeline};

pub use bm25::{Bm25, ScoredDoc, WeightedQuery};
pub use store::{FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index over an empty collection")]
    EmptyCollection,
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("index was built with a different stoplist than the query pipeline")]
    PipelineMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    /// Sorted vocabulary; a term's id is its position here.
    terms: Vec<Term>,
    term_ids: HashMap<Term, u32>,
    /// Per term id, strictly increasing in `doc`.
    postings: Vec<Vec<Posting>>,
    collection_counts: Vec<u64>,
    /// Ordinal -> registry id, sorted ascending.
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    /// Per document: (term id, tf), sorted by term id. Derived from the postings.
    doc_terms: Vec<Vec<(u32, u32)>>,
    pipeline_fingerprint: [u8; 32],
}

impl InvertedIndex {
    /// Indexes every section of every trial. Ordinals follow sorted registry id.
    pub fn build(trials: &[ClinicalTrial], pipeline: &TextPipeline) -> Result<Self, IndexError> {
        if trials.is_empty() {
            return Err(IndexError::EmptyCollection);
        }
        let mut sorted: Vec<&ClinicalTrial> = trials.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));

        let processed: Vec<(u32, Vec<(Term, u32)>)> = sorted
            .par_iter()
            .map(|t| {
                let terms = pipeline.process(&t.indexable_text());
                let mut counts: HashMap<Term, u32> = HashMap::new();
                for term in &terms {
                    *counts.entry(term.clone()).or_default() += 1;
                }
                let mut counts: Vec<(Term, u32)> = counts.into_iter().collect();
                counts.sort();
                (terms.len() as u32, counts)
            })
            .collect();

        let mut by_term: HashMap<Term, Vec<Posting>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(processed.len());
        for (ordinal, (len, counts)) in processed.into_iter().enumerate() {
            doc_lengths.push(len);
            for (term, tf) in counts {
                by_term.entry(term).or_default().push(Posting { doc: ordinal as u32, tf });
            }
        }
        let mut entries: Vec<(Term, Vec<Posting>)> = by_term.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let (terms, postings): (Vec<Term>, Vec<Vec<Posting>>) = entries.into_iter().unzip();
        let doc_ids = sorted.iter().map(|t| t.id.clone()).collect();
        Ok(Self::from_parts(terms, postings, doc_ids, doc_lengths, pipeline.stopwords().fingerprint()))
    }

    fn from_parts(
        terms: Vec<Term>,
        postings: Vec<Vec<Posting>>,
        doc_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        pipeline_fingerprint: [u8; 32],
    ) -> Self {
        let n = doc_ids.len();
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if n == 0 { 0.0 } else { total as f64 / n as f64 };
        let collection_counts = postings.iter().map(|p| p.iter().map(|x| x.tf as u64).sum()).collect();
        let term_ids = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let mut doc_terms: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
        for (tid, plist) in postings.iter().enumerate() {
            for p in plist {
                doc_terms[p.doc as usize].push((tid as u32, p.tf));
            }
        }
        InvertedIndex {
            terms,
            term_ids,
            postings,
            collection_counts,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            doc_terms,
            pipeline_fingerprint,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, ordinal: u32) -> u32 {
        self.doc_lengths[ordinal as usize]
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn ordinal_of(&self, doc_id: &str) -> Option<u32> {
        self.doc_ids.binary_search_by(|d| d.as_str().cmp(doc_id)).ok().map(|i| i as u32)
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &Term {
        &self.terms[id as usize]
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.term_id(term).map(|id| self.postings[id as usize].as_slice()).unwrap_or(&[])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn collection_count(&self, term: &str) -> u64 {
        self.term_id(term).map(|id| self.collection_counts[id as usize]).unwrap_or(0)
    }

    pub fn term_frequency(&self, term: &str, ordinal: u32) -> u32 {
        let plist = self.postings(term);
        plist.binary_search_by_key(&ordinal, |p| p.doc).map(|i| plist[i].tf).unwrap_or(0)
    }

    /// (term, tf) pairs of one document, in term order.
    pub fn doc_terms(&self, ordinal: u32) -> impl Iterator<Item = (&Term, u32)> + '_ {
        self.doc_terms[ordinal as usize].iter().map(move |&(tid, tf)| (&self.terms[tid as usize], tf))
    }

    pub fn pipeline_fingerprint(&self) -> [u8; 32] {
        self.pipeline_fingerprint
    }

    /// Errors when `pipeline` would normalize queries differently from the documents.
    pub fn check_pipeline(&self, pipeline: &TextPipeline) -> Result<(), IndexError> {
        if pipeline.stopwords().fingerprint() == self.pipeline_fingerprint {
            Ok(())
        } else {
            Err(IndexError::PipelineMismatch)
        }
    }
}
