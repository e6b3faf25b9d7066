use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Ranked retrieval output for one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRanking {
    pub topic_id: u32,
    pub run_tag: String,
    pub docs: Vec<RankedDoc>,
}

impl RunRanking {
    /// Builds a ranking from documents already in rank order.
    pub fn from_ordered(
        topic_id: u32,
        run_tag: impl Into<String>,
        docs: impl IntoIterator<Item = (String, f64)>,
    ) -> Self {
        RunRanking {
            topic_id,
            run_tag: run_tag.into(),
            docs: docs
                .into_iter()
                .enumerate()
                .map(|(i, (doc_id, score))| RankedDoc { doc_id, score, rank: i + 1 })
                .collect(),
        }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.docs.iter().map(|d| d.doc_id.as_str())
    }
}

/// `topic Q0 doc rank score tag`, single spaces, score to 6 decimals.
pub fn format_run(rankings: &[RunRanking]) -> String {
    let mut out = String::new();
    for r in rankings {
        for d in &r.docs {
            writeln!(out, "{} Q0 {} {} {:.6} {}", r.topic_id, d.doc_id, d.rank, d.score, r.run_tag).unwrap();
        }
    }
    out
}

pub fn write_run(rankings: &[RunRanking], path: &Path) -> Result<(), CorpusError> {
    std::fs::write(path, format_run(rankings)).map_err(|e| CorpusError::io(path, e))
}

pub fn load_run(path: &Path) -> Result<Vec<RunRanking>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_run(&text)
}

/// Parses a run file. Line order is irrelevant: documents are ordered by their
/// rank column, which must run contiguously from 1 for every topic.
pub fn parse_run(text: &str) -> Result<Vec<RunRanking>, CorpusError> {
    let mut by_topic: BTreeMap<u32, (String, Vec<(RankedDoc, usize)>)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 6 {
            return Err(CorpusError::format(lineno, format!("expected 6 fields, found {}", f.len())));
        }
        let topic: u32 =
            f[0].parse().map_err(|_| CorpusError::format(lineno, format!("invalid topic id '{}'", f[0])))?;
        let rank: usize = f[3].parse().map_err(|_| CorpusError::format(lineno, format!("invalid rank '{}'", f[3])))?;
        let score: f64 = f[4].parse().map_err(|_| CorpusError::format(lineno, format!("invalid score '{}'", f[4])))?;
        let entry = by_topic.entry(topic).or_insert_with(|| (f[5].to_string(), Vec::new()));
        entry.1.push((RankedDoc { doc_id: f[2].to_string(), score, rank }, lineno));
    }

    let mut out = Vec::with_capacity(by_topic.len());
    for (topic_id, (run_tag, mut docs)) in by_topic {
        docs.sort_by_key(|(d, _)| d.rank);
        let mut seen = HashSet::new();
        for (expected, (d, lineno)) in docs.iter().enumerate() {
            if d.rank != expected + 1 {
                return Err(CorpusError::format(
                    *lineno,
                    format!("rank gap for topic {topic_id}: expected rank {}, found {}", expected + 1, d.rank),
                ));
            }
            if !seen.insert(d.doc_id.as_str()) {
                return Err(CorpusError::format(
                    *lineno,
                    format!("duplicate document {} for topic {topic_id}", d.doc_id),
                ));
            }
            if expected > 0 && d.score > docs[expected - 1].0.score {
                return Err(CorpusError::format(*lineno, format!("score increases with rank for topic {topic_id}")));
            }
        }
        out.push(RunRanking { topic_id, run_tag, docs: docs.into_iter().map(|(d, _)| d).collect() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_docs_three_lines() {
        let r = RunRanking::from_ordered(7, "tag", [("A".into(), 3.0), ("B".into(), 2.0), ("C".into(), 1.0)]);
        let s = format_run(&[r]);
        let ranks: Vec<&str> = s.lines().map(|l| l.split(' ').nth(3).unwrap()).collect();
        assert_eq!(ranks, ["1", "2", "3"]);
        assert_eq!(s.lines().next().unwrap(), "7 Q0 A 1 3.000000 tag");
    }

    #[test]
    fn six_decimal_rounding() {
        let r = RunRanking::from_ordered(1, "t", [("D".into(), 1.23456789)]);
        assert!(format_run(&[r]).contains(" 1.234568 "));
    }

    #[test]
    fn rank_gap_is_fatal() {
        let err = parse_run("1 Q0 A 1 2.0 t\n1 Q0 B 3 1.0 t\n").unwrap_err();
        assert!(err.to_string().contains("rank gap"));
        assert!(parse_run("1 Q0 A 2 2.0 t\n").is_err());
    }

    #[test]
    fn line_order_irrelevant() {
        let a = parse_run("1 Q0 A 1 2.0 t\n1 Q0 B 2 1.0 t\n2 Q0 C 1 0.5 t\n").unwrap();
        let b = parse_run("2 Q0 C 1 0.5 t\n1 Q0 B 2 1.0 t\n1 Q0 A 1 2.0 t\n").unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn write_read_roundtrip(
            topics in proptest::collection::btree_map(1u32..500, proptest::collection::vec(-50.0f64..50.0, 0..30), 1..6)
        ) {
            let rankings: Vec<RunRanking> = topics
                .iter()
                .filter(|(_, s)| !s.is_empty())
                .map(|(t, scores)| {
                    let mut scores = scores.clone();
                    scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    RunRanking::from_ordered(*t, "prop", scores.into_iter().enumerate().map(|(i, s)| (format!("NCT{i:08}"), s)))
                })
                .collect();
            let back = parse_run(&format_run(&rankings)).unwrap();
            prop_assert_eq!(back.len(), rankings.len());
            for (x, y) in rankings.iter().zip(&back) {
                prop_assert_eq!(x.topic_id, y.topic_id);
                let ids_x: Vec<_> = x.doc_ids().collect();
                let ids_y: Vec<_> = y.doc_ids().collect();
                prop_assert_eq!(ids_x, ids_y);
                for (dx, dy) in x.docs.iter().zip(&y.docs) {
                    prop_assert_eq!(dx.rank, dy.rank);
                    prop_assert!((dx.score - dy.score).abs() <= 5e-7);
                }
            }
        }
    }
}
