use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// A free-text admission note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientTopic {
    pub id: u32,
    pub text: String,
}

pub fn load_topics(path: &Path) -> Result<Vec<PatientTopic>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_topics(&text)
}

/// Accepts topic XML (`<topics><topic number="N">text</topic>...</topics>`) or
/// tab-separated `id<TAB>text` lines. Note text is kept verbatim apart from
/// trimming at the edges.
pub fn parse_topics(text: &str) -> Result<Vec<PatientTopic>, CorpusError> {
    let topics = if text.trim_start().starts_with('<') { parse_xml(text)? } else { parse_tsv(text)? };
    let mut seen = BTreeSet::new();
    for t in &topics {
        if !seen.insert(t.id) {
            return Err(CorpusError::Invalid(format!("duplicate topic number {}", t.id)));
        }
    }
    Ok(topics)
}

fn parse_id(s: &str, line: usize) -> Result<u32, CorpusError> {
    match s.trim().parse::<u32>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(CorpusError::format(line, format!("invalid topic number '{}'", s.trim()))),
    }
}

fn parse_xml(text: &str) -> Result<Vec<PatientTopic>, CorpusError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| CorpusError::format(e.pos().row as usize, e.to_string()))?;
    let mut out = Vec::new();
    for node in doc.descendants().filter(|n| n.has_tag_name("topic")) {
        let line = doc.text_pos_at(node.range().start).row as usize;
        let number =
            node.attribute("number").ok_or_else(|| CorpusError::format(line, "topic without number attribute"))?;
        let id = parse_id(number, line)?;
        let body: String = node.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect();
        let body = body.trim();
        if body.is_empty() {
            return Err(CorpusError::format(line, format!("topic {id} has empty text")));
        }
        out.push(PatientTopic { id, text: body.to_string() });
    }
    Ok(out)
}

fn parse_tsv(text: &str) -> Result<Vec<PatientTopic>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line.split_once('\t').ok_or_else(|| CorpusError::format(i + 1, "expected id<TAB>text"))?;
        let id = parse_id(id, i + 1)?;
        let body = body.trim();
        if body.is_empty() {
            return Err(CorpusError::format(i + 1, format!("topic {id} has empty text")));
        }
        out.push(PatientTopic { id, text: body.to_string() });
    }
    Ok(out)
}
