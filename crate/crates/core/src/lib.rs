//! Clinical-trials retrieval lab: corpus I/O, text normalization, BM25 and RM3
//! retrieval, LLM prompt strategies with cached replay, response parsing,
//! negation handling and TREC-style evaluation.

pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod index;
pub mod negation;
pub mod parsing;
pub mod prompts;
pub mod rm3;
pub mod text;
