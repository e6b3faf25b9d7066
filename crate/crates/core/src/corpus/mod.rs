//! Ingest and emit external data: trial registry documents, patient topics,
//! graded judgments, run files and externally authored keyword queries.

mod keywords;
mod qrels;
mod run;
mod topics;
mod trials;

use std::path::PathBuf;

use thiserror::Error;

pub use keywords::{concat_assessor_queries, load_keyword_queries, parse_keyword_queries, split_keywords};
pub use qrels::{load_qrels, parse_qrels, Grade, Qrels};
pub use run::{format_run, load_run, parse_run, write_run, RankedDoc, RunRanking};
pub use topics::{load_topics, parse_topics, PatientTopic};
pub use trials::{
    load_trials, parse_age_months, parse_trial_xml, ClinicalTrial, CorpusFormat, Gender, LoadWarning, TrialLoad,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{message}, line {line}")]
    Format { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.into(), source }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        CorpusError::Format { line, message: message.into() }
    }
}
