//! Retrieval measures over TREC runs and graded qrels, per-topic aggregation,
//! and paired significance testing.
//!
//! Binary measures treat only grade 2 as relevant. nDCG uses the raw grade as
//! gain. Unjudged documents are nonrelevant with zero gain.

mod report;
mod stats;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{compare_runs, Comparison, ComparisonRow};
pub use stats::{ln_gamma, paired_ttest, regularized_incomplete_beta, student_t_two_sided, TTest};

use crate::corpus::{Grade, Qrels, RunRanking};

pub const RELEVANT_GRADE: Grade = 2;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("topic sets differ; only in first: {only_a:?}; only in second: {only_b:?}")]
    TopicMismatch { only_a: Vec<u32>, only_b: Vec<u32> },
    #[error("paired t-test needs at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("unknown measure {0:?}")]
    UnknownMeasure(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    P5,
    P10,
    P25,
    Rprec,
    Bpref,
    Mrr,
    Ndcg5,
    Ndcg10,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::P5,
        Metric::P10,
        Metric::P25,
        Metric::Rprec,
        Metric::Bpref,
        Metric::Mrr,
        Metric::Ndcg5,
        Metric::Ndcg10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::P5 => "P@5",
            Metric::P10 => "P@10",
            Metric::P25 => "P@25",
            Metric::Rprec => "Rprec",
            Metric::Bpref => "Bpref",
            Metric::Mrr => "MRR",
            Metric::Ndcg5 => "nDCG@5",
            Metric::Ndcg10 => "nDCG@10",
        }
    }

    pub fn compute(self, ranking: &[&str], judgments: &Judgments) -> f64 {
        match self {
            Metric::P5 => precision_at_k(ranking, judgments, 5),
            Metric::P10 => precision_at_k(ranking, judgments, 10),
            Metric::P25 => precision_at_k(ranking, judgments, 25),
            Metric::Rprec => rprec(ranking, judgments),
            Metric::Bpref => bpref(ranking, judgments),
            Metric::Mrr => mrr(ranking, judgments),
            Metric::Ndcg5 => ndcg_at_k(ranking, judgments, 5),
            Metric::Ndcg10 => ndcg_at_k(ranking, judgments, 10),
        }
    }
}

/// A metric on the full ranking or on its condensed form. Condensed measures
/// print with a trailing `'`, e.g. `P@10'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Measure {
    pub metric: Metric,
    pub condensed: bool,
}

impl Measure {
    pub const fn full(metric: Metric) -> Self {
        Measure { metric, condensed: false }
    }

    pub const fn condensed(metric: Metric) -> Self {
        Measure { metric, condensed: true }
    }

    /// The eight standard measures, followed by their condensed variants when asked.
    pub fn set(with_condensed: bool) -> Vec<Measure> {
        let mut out: Vec<Measure> = Metric::ALL.iter().map(|&m| Measure::full(m)).collect();
        if with_condensed {
            out.extend(Metric::ALL.iter().map(|&m| Measure::condensed(m)));
        }
        out
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.metric.as_str())?;
        if self.condensed {
            f.write_str("'")?;
        }
        Ok(())
    }
}

impl FromStr for Measure {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        let s = s.trim();
        let (name, condensed) = match s.strip_suffix('\'') {
            Some(n) => (n, true),
            None => (s, false),
        };
        let metric = Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(name))
            .ok_or_else(|| EvalError::UnknownMeasure(s.to_string()))?;
        Ok(Measure { metric, condensed })
    }
}

/// Graded judgments for one topic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Judgments {
    grades: HashMap<String, Grade>,
    relevant: usize,
    nonrelevant: usize,
    ideal: Vec<Grade>,
}

impl Judgments {
    pub fn new<'a>(entries: impl IntoIterator<Item = (&'a str, Grade)>) -> Self {
        let grades: HashMap<String, Grade> = entries.into_iter().map(|(d, g)| (d.to_string(), g)).collect();
        let relevant = grades.values().filter(|&&g| g == RELEVANT_GRADE).count();
        let nonrelevant = grades.len() - relevant;
        let mut ideal: Vec<Grade> = grades.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        Judgments { grades, relevant, nonrelevant, ideal }
    }

    pub fn for_topic(qrels: &Qrels, topic: u32) -> Self {
        match qrels.topic(topic) {
            Some(map) => Self::new(map.iter().map(|(d, &g)| (d.as_str(), g))),
            None => Self::default(),
        }
    }

    pub fn grade(&self, doc: &str) -> Option<Grade> {
        self.grades.get(doc).copied()
    }

    pub fn is_relevant(&self, doc: &str) -> bool {
        self.grade(doc) == Some(RELEVANT_GRADE)
    }

    /// Judged documents with grade 2.
    pub fn num_relevant(&self) -> usize {
        self.relevant
    }

    /// Judged documents with grade 0 or 1.
    pub fn num_nonrelevant(&self) -> usize {
        self.nonrelevant
    }
}

/// Relevant documents in the top `k`, divided by `k`.
pub fn precision_at_k(ranking: &[&str], j: &Judgments, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let hits = ranking.iter().take(k).filter(|d| j.is_relevant(d)).count();
    hits as f64 / k as f64
}

pub fn rprec(ranking: &[&str], j: &Judgments) -> f64 {
    let r = j.num_relevant();
    if r == 0 {
        return 0.0;
    }
    let hits = ranking.iter().take(r).filter(|d| j.is_relevant(d)).count();
    hits as f64 / r as f64
}

pub fn mrr(ranking: &[&str], j: &Judgments) -> f64 {
    ranking.iter().position(|d| j.is_relevant(d)).map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// With no judged nonrelevant documents every retrieved relevant one counts 1.
pub fn bpref(ranking: &[&str], j: &Judgments) -> f64 {
    let r = j.num_relevant();
    if r == 0 {
        return 0.0;
    }
    let denom = r.min(j.num_nonrelevant());
    let mut nonrel_above = 0usize;
    let mut sum = 0.0;
    for d in ranking {
        match j.grade(d) {
            Some(RELEVANT_GRADE) => {
                sum += if denom == 0 { 1.0 } else { 1.0 - nonrel_above.min(r) as f64 / denom as f64 };
            }
            Some(_) => nonrel_above += 1,
            None => {}
        }
    }
    sum / r as f64
}

pub fn ndcg_at_k(ranking: &[&str], j: &Judgments, k: usize) -> f64 {
    let discount = |i: usize| (i as f64 + 2.0).log2();
    let dcg: f64 = ranking.iter().take(k).enumerate().map(|(i, d)| j.grade(d).unwrap_or(0) as f64 / discount(i)).sum();
    let idcg: f64 = j.ideal.iter().take(k).enumerate().map(|(i, &g)| g as f64 / discount(i)).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Drops unjudged documents, keeping the order of the rest.
pub fn condense<'a>(ranking: &[&'a str], j: &Judgments) -> Vec<&'a str> {
    ranking.iter().copied().filter(|d| j.grade(d).is_some()).collect()
}

/// Per-topic scores and means for a fixed list of measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub measures: Vec<Measure>,
    pub per_topic: BTreeMap<u32, Vec<f64>>,
    pub means: Vec<f64>,
}

impl MetricReport {
    fn column(&self, measure: Measure) -> Option<usize> {
        self.measures.iter().position(|&m| m == measure)
    }

    pub fn mean(&self, measure: Measure) -> Option<f64> {
        self.column(measure).map(|c| self.means[c])
    }

    pub fn get(&self, topic: u32, measure: Measure) -> Option<f64> {
        let c = self.column(measure)?;
        self.per_topic.get(&topic).map(|v| v[c])
    }

    pub fn topic_scores(&self, measure: Measure) -> Option<BTreeMap<u32, f64>> {
        let c = self.column(measure)?;
        Some(self.per_topic.iter().map(|(&t, v)| (t, v[c])).collect())
    }

    /// Aligned text table: one row per topic, then `all` with the means.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        rows.push(std::iter::once("topic".to_string()).chain(self.measures.iter().map(|m| m.to_string())).collect());
        for (t, v) in &self.per_topic {
            rows.push(std::iter::once(t.to_string()).chain(v.iter().map(|x| format!("{x:.4}"))).collect());
        }
        rows.push(std::iter::once("all".to_string()).chain(self.means.iter().map(|x| format!("{x:.4}"))).collect());
        report::align(&rows)
    }

    /// Tab-separated: header, one row per topic, then `all`. Six decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("topic");
        for m in &self.measures {
            out.push('\t');
            out.push_str(&m.to_string());
        }
        out.push('\n');
        let mut row = |label: &str, vals: &[f64]| {
            out.push_str(label);
            for x in vals {
                out.push_str(&format!("\t{x:.6}"));
            }
            out.push('\n');
        };
        for (t, v) in &self.per_topic {
            row(&t.to_string(), v);
        }
        row("all", &self.means);
        out
    }
}

/// Scores `run` on every topic of `qrels`; a topic missing from the run
/// scores 0 everywhere and run topics without judgments are ignored.
pub fn evaluate_run(run: &[RunRanking], qrels: &Qrels, condensed: bool) -> MetricReport {
    evaluate_measures(run, qrels, &Measure::set(condensed))
}

pub fn evaluate_measures(run: &[RunRanking], qrels: &Qrels, measures: &[Measure]) -> MetricReport {
    let by_topic: HashMap<u32, &RunRanking> = run.iter().map(|r| (r.topic_id, r)).collect();
    let topics: Vec<u32> = qrels.topics().collect();
    let per_topic: BTreeMap<u32, Vec<f64>> = topics
        .par_iter()
        .map(|&t| {
            let j = Judgments::for_topic(qrels, t);
            let ranking: Vec<&str> = by_topic.get(&t).map(|r| r.doc_ids().collect()).unwrap_or_default();
            let cond = condense(&ranking, &j);
            let scores =
                measures.iter().map(|m| m.metric.compute(if m.condensed { &cond } else { &ranking }, &j)).collect();
            (t, scores)
        })
        .collect();
    let n = per_topic.len();
    let means = (0..measures.len())
        .map(|c| if n == 0 { 0.0 } else { per_topic.values().map(|v| v[c]).sum::<f64>() / n as f64 })
        .collect();
    MetricReport { measures: measures.to_vec(), per_topic, means }
}
