use std::collections::BTreeMap;
use std::path::Path;

use super::CorpusError;

/// Relevance grade: 2 = eligible, 1 = excludes, 0 = not relevant.
pub type Grade = u8;

/// Graded judgments keyed by topic, then document id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    by_topic: BTreeMap<u32, BTreeMap<String, Grade>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment. Rejects grades outside {0,1,2} and repeated keys.
    pub fn insert(&mut self, topic: u32, doc: impl Into<String>, grade: Grade) -> Result<(), String> {
        if grade > 2 {
            return Err("grade out of range".into());
        }
        let doc = doc.into();
        let judged = self.by_topic.entry(topic).or_default();
        if judged.contains_key(&doc) {
            return Err(format!("duplicate judgment for topic {topic}, document {doc}"));
        }
        judged.insert(doc, grade);
        Ok(())
    }

    pub fn grade(&self, topic: u32, doc: &str) -> Option<Grade> {
        self.by_topic.get(&topic)?.get(doc).copied()
    }

    pub fn topic(&self, topic: u32) -> Option<&BTreeMap<String, Grade>> {
        self.by_topic.get(&topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_topic.keys().copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, &str, Grade)> + '_ {
        self.by_topic.iter().flat_map(|(t, docs)| docs.iter().map(move |(d, g)| (*t, d.as_str(), *g)))
    }

    pub fn len(&self) -> usize {
        self.by_topic.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_qrels(path: &Path) -> Result<Qrels, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_qrels(&text)
}

/// Parses `topic_id 0 doc_id grade` lines (any whitespace separation).
pub fn parse_qrels(text: &str) -> Result<Qrels, CorpusError> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(CorpusError::format(lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let topic: u32 =
            fields[0].parse().map_err(|_| CorpusError::format(lineno, format!("invalid topic id '{}'", fields[0])))?;
        let grade: i64 =
            fields[3].parse().map_err(|_| CorpusError::format(lineno, format!("invalid grade '{}'", fields[3])))?;
        if !(0..=2).contains(&grade) {
            return Err(CorpusError::format(lineno, "grade out of range"));
        }
        qrels.insert(topic, fields[2], grade as Grade).map_err(|m| CorpusError::format(lineno, m))?;
    }
    Ok(qrels)
}
