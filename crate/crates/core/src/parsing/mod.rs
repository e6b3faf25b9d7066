//! Turns raw model replies into keyword queries: keyword lists, bracketed
//! queries, structured patient records and entity-tagged notes.

mod record;
mod tags;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use record::{
    is_not_available, parse_patient_record, synthesize_record_query, PatientRecord, RecordField, RecordParse,
};
pub use tags::{parse_entity_tags, Marker, TaggedNote, ENTITY_TOKEN};

use crate::corpus::split_keywords;
use crate::prompts::StrategyId;
use crate::text::{Term, TextPipeline};

/// Ordered keyword phrases as produced by a parser.
pub type KeywordList = Vec<String>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message}")]
pub struct ParseError {
    pub message: String,
    pub raw: String,
}

impl ParseError {
    pub fn new(message: impl Into<String>, raw: &str) -> Self {
        ParseError { message: message.into(), raw: raw.to_string() }
    }
}

pub const QUERY_TOKEN: &str = "[query_keywords]";
pub const EXPANDED_QUERY_TOKEN: &str = "[query_keywords_expanded]";

fn lead_in_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*([A-Za-z][A-Za-z '\-]{0,60}):\s*").unwrap())
}

fn list_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*(?:[-*\u{2022}]|\d{1,3}[.)])[ \t]+").unwrap())
}

/// Comma-separated keywords. A short lead-in such as `Keywords:` and list
/// bullets at line starts are removed; quoted phrases keep inner commas.
pub fn parse_keyword_list(text: &str) -> Result<KeywordList, ParseError> {
    if !text.contains(',') && !text.chars().any(char::is_alphanumeric) {
        return Err(ParseError::new("reply holds no keywords", text));
    }
    let mut body = text;
    if let Some(m) = lead_in_re().captures(text) {
        let lead = m.get(1).unwrap().as_str();
        if lead.split_whitespace().count() <= 6 {
            body = &text[m.get(0).unwrap().end()..];
        }
    }
    let body = list_marker_re().replace_all(body, "");
    let kws = split_keywords(&body);
    if kws.is_empty() {
        return Err(ParseError::new("reply holds no keywords", text));
    }
    Ok(kws)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracketed {
    pub text: String,
    pub warning: Option<String>,
}

/// Content between the first two occurrences of `token`, trimmed and
/// unquoted. Without a closing token the rest of the reply is taken.
pub fn parse_bracketed(text: &str, token: &str) -> Result<Bracketed, ParseError> {
    let start =
        text.find(token).ok_or_else(|| ParseError::new(format!("token {token} not found"), text))? + token.len();
    let rest = &text[start..];
    let (inner, warning) = match rest.find(token) {
        Some(end) => (&rest[..end], None),
        None => (rest, Some(format!("closing {token} missing; took the remainder of the reply"))),
    };
    let cleaned = inner.trim().trim_matches(['"', '\u{201c}', '\u{201d}', '\'', '`']).trim().to_string();
    Ok(Bracketed { text: cleaned, warning })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QggtQueries {
    pub initial: Option<String>,
    pub refined: Option<String>,
    pub warnings: Vec<String>,
}

/// Reads both answers of the query-generation-with-refinement prompt. Fails
/// only when neither is present.
pub fn parse_qggt(text: &str) -> Result<QggtQueries, ParseError> {
    let mut warnings = Vec::new();
    let head = text.find(EXPANDED_QUERY_TOKEN).map_or(text, |i| &text[..i]);
    let initial = match parse_bracketed(head, QUERY_TOKEN) {
        Ok(b) => {
            warnings.extend(b.warning);
            Some(b.text)
        }
        Err(e) => {
            warnings.push(e.message);
            None
        }
    };
    let refined = match parse_bracketed(text, EXPANDED_QUERY_TOKEN) {
        Ok(b) => {
            warnings.extend(b.warning);
            Some(b.text)
        }
        Err(e) => {
            warnings.push(e.message);
            None
        }
    };
    if initial.is_none() && refined.is_none() {
        return Err(ParseError::new("neither query token found", text));
    }
    Ok(QggtQueries { initial, refined, warnings })
}

/// One topic per line or comma item; bullets, parentheses and `MeSH` labels dropped.
pub fn parse_trial_topics(text: &str) -> Result<KeywordList, ParseError> {
    static LABEL: OnceLock<Regex> = OnceLock::new();
    let label = LABEL.get_or_init(|| Regex::new(r"(?i)\bmesh(?:\s+terms?)?\s*:").unwrap());
    let cleaned = list_marker_re().replace_all(text, "");
    let cleaned = label.replace_all(&cleaned, ",");
    let cleaned: String = cleaned.chars().map(|c| if matches!(c, '(' | ')' | ';') { ',' } else { c }).collect();
    let kws = split_keywords(&cleaned);
    if kws.is_empty() {
        return Err(ParseError::new("reply holds no topics", text));
    }
    Ok(kws)
}

/// The single route from parsed keywords to retrieval terms.
pub fn build_query_terms(pipeline: &TextPipeline, keywords: &[String]) -> Vec<Term> {
    pipeline.fold_phrases(keywords)
}

/// Drops the stems of "clinical" and "trial".
pub fn scrub_clinical_trial(terms: &[Term]) -> Vec<Term> {
    terms.iter().filter(|t| !matches!(t.as_str(), "clinic" | "trial")).cloned().collect()
}

/// Options for turning replies into query variants.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOptions {
    pub record_fields: Vec<RecordField>,
    pub include_mesh: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions { record_fields: RecordField::DEFAULT_QUERY_FIELDS.to_vec(), include_mesh: true }
    }
}

/// Query variants derived from one conversation, plus parse diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivedQueries {
    pub variants: Vec<(String, KeywordList)>,
    pub warnings: Vec<String>,
    pub repairs: Vec<String>,
    pub record: Option<PatientRecord>,
}

/// Variant names: `QGGT.initial`, `QGGT.refined`, `QGGT.initial+refined`,
/// `IEG.extracted`, `IEG.expanded`, `IEG.extracted+expanded`; other
/// strategies produce one variant named after the strategy.
pub fn derive_queries(
    strategy: StrategyId,
    replies: &[String],
    opts: &QueryOptions,
) -> Result<DerivedQueries, ParseError> {
    let reply = |i: usize| -> Result<&str, ParseError> {
        replies
            .get(i)
            .map(String::as_str)
            .ok_or_else(|| ParseError::new(format!("{strategy}: missing reply for turn {}", i + 1), ""))
    };
    let mut out = DerivedQueries::default();
    match strategy {
        StrategyId::Qggt => {
            let q = parse_qggt(reply(0)?)?;
            out.warnings = q.warnings;
            let initial: Vec<String> = q.initial.into_iter().filter(|s| !s.is_empty()).collect();
            let refined: Vec<String> = q.refined.into_iter().filter(|s| !s.is_empty()).collect();
            let both: Vec<String> = initial.iter().chain(&refined).cloned().collect();
            out.variants.push(("QGGT.initial".into(), initial));
            out.variants.push(("QGGT.refined".into(), refined));
            out.variants.push(("QGGT.initial+refined".into(), both));
        }
        StrategyId::Ieg => {
            let extracted = parse_keyword_list(reply(0)?)?;
            let expanded = parse_keyword_list(reply(1)?)?;
            let both: Vec<String> = extracted.iter().chain(&expanded).cloned().collect();
            out.variants.push(("IEG.extracted".into(), extracted));
            out.variants.push(("IEG.expanded".into(), expanded));
            out.variants.push(("IEG.extracted+expanded".into(), both));
        }
        StrategyId::Iemdmt => {
            let parsed = parse_patient_record(reply(0)?)?;
            let kws = synthesize_record_query(&parsed.record, &opts.record_fields, opts.include_mesh);
            out.variants.push(("IEMDMT".into(), kws));
            out.warnings = parsed.warnings;
            out.repairs = parsed.repairs;
            out.record = Some(parsed.record);
        }
        StrategyId::NriemtTag => {
            return Err(ParseError::new("tagging replies are consumed by the negation pipeline", reply(0)?));
        }
        StrategyId::TrialTopicGen => {
            out.variants.push((strategy.to_string(), parse_trial_topics(reply(0)?)?));
        }
        StrategyId::Qgmt | StrategyId::Iemt | StrategyId::FewshotQg | StrategyId::ExplicitExpand => {
            out.variants.push((strategy.to_string(), parse_keyword_list(reply(0)?)?));
        }
    }
    Ok(out)
}

/// One line of a parsed-query sidecar file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub topic_id: u32,
    pub variant: String,
    pub keywords: KeywordList,
}

fn sidecar_keyword(kw: &str) -> String {
    let kw: String =
        kw.chars().map(|c| if c == '\t' || c == '\n' || c == '\r' || c == '"' { ' ' } else { c }).collect();
    let kw = kw.trim();
    if kw.contains(',') {
        format!("\"{kw}\"")
    } else {
        kw.to_string()
    }
}

/// `topic<TAB>variant<TAB>keywords`, keywords comma-separated with
/// comma-bearing phrases double-quoted. Entries are written in the given order.
pub fn format_sidecar(entries: &[SidecarEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let kws: Vec<String> = e.keywords.iter().map(|k| sidecar_keyword(k)).filter(|k| !k.is_empty()).collect();
        writeln!(out, "{}\t{}\t{}", e.topic_id, e.variant, kws.join(", ")).unwrap();
    }
    out
}

pub fn parse_sidecar(text: &str) -> Result<Vec<SidecarEntry>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(topic), Some(variant), Some(kws)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(ParseError::new(format!("sidecar line {}: expected 3 tab-separated fields", i + 1), line));
        };
        let topic_id = topic
            .trim()
            .parse()
            .map_err(|_| ParseError::new(format!("sidecar line {}: invalid topic id", i + 1), line))?;
        out.push(SidecarEntry { topic_id, variant: variant.trim().to_string(), keywords: split_keywords(kws) });
    }
    Ok(out)
}

pub fn load_sidecar(path: &Path) -> Result<Vec<SidecarEntry>, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError::new(format!("{}: {e}", path.display()), ""))?;
    parse_sidecar(&text)
}

/// Groups sidecar entries by variant, then topic.
pub fn sidecar_by_variant(entries: &[SidecarEntry]) -> BTreeMap<String, BTreeMap<u32, KeywordList>> {
    let mut out: BTreeMap<String, BTreeMap<u32, KeywordList>> = BTreeMap::new();
    for e in entries {
        out.entry(e.variant.clone()).or_default().entry(e.topic_id).or_default().extend(e.keywords.iter().cloned());
    }
    out
}
