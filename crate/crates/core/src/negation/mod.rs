//! Assertion status of tagged entities and removal of negated content from
//! notes, plus the four-step tag / classify / scrub / extract pipeline.

mod remote;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{AssertionClient, ENV_ASSERTION_ENDPOINT};

use crate::corpus::PatientTopic;
use crate::gateway::{CacheKey, Gateway, GatewayError};
use crate::parsing::{parse_entity_tags, parse_keyword_list, KeywordList, ParseError, TaggedNote};
use crate::prompts::PromptStrategy;

const BUNDLED_NEGATION: &str = include_str!("../../data/triggers/negation.txt");
const BUNDLED_SPECULATION: &str = include_str!("../../data/triggers/speculation.txt");

#[derive(Debug, Error)]
pub enum NegationError {
    #[error("span {start}..{end} is invalid for a note of {len} characters")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("assertion service: {0}")]
    Remote(String),
    #[error("assertion service protocol: {0}")]
    Protocol(String),
    #[error("assertion service returned {got} labels for {expected} entities")]
    LabelCount { expected: usize, got: usize },
    #[error("{path}: {message}")]
    Triggers { path: String, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssertionLabel {
    Present,
    Absent,
    Possible,
}

impl AssertionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AssertionLabel::Present => "present",
            AssertionLabel::Absent => "absent",
            AssertionLabel::Possible => "possible",
        }
    }
}

impl fmt::Display for AssertionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssertionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "present" => Ok(AssertionLabel::Present),
            "absent" => Ok(AssertionLabel::Absent),
            "possible" => Ok(AssertionLabel::Possible),
            other => Err(format!("unknown assertion label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub label: AssertionLabel,
    pub confidence: f64,
}

impl Assertion {
    pub fn certain(label: AssertionLabel) -> Self {
        Assertion { label, confidence: 1.0 }
    }
}

/// Trigger phrases, lowercased and split into words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerSet {
    phrases: Vec<Vec<String>>,
}

impl TriggerSet {
    /// One phrase per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        let mut phrases: Vec<Vec<String>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| words(&l.to_lowercase()).into_iter().map(|(_, _, w)| w).collect::<Vec<_>>())
            .filter(|p: &Vec<String>| !p.is_empty())
            .collect();
        phrases.sort();
        phrases.dedup();
        TriggerSet { phrases }
    }

    pub fn from_path(path: &Path) -> Result<Self, NegationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NegationError::Triggers { path: path.display().to_string(), message: e.to_string() })?;
        Ok(Self::parse(&text))
    }

    pub fn bundled_negation() -> Self {
        Self::parse(BUNDLED_NEGATION)
    }

    pub fn bundled_speculation() -> Self {
        Self::parse(BUNDLED_SPECULATION)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Char ranges of every trigger occurrence in `chars[from..to]`.
    fn occurrences(&self, chars: &[char], from: usize, to: usize) -> Vec<(usize, usize)> {
        let segment: String = chars[from..to].iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
        let ws = words(&segment);
        let mut out = Vec::new();
        for i in 0..ws.len() {
            for phrase in &self.phrases {
                let Some(window) = ws.get(i..i + phrase.len()) else { continue };
                let matches = window.iter().zip(phrase).all(|(w, p)| &w.2 == p)
                    && window
                        .windows(2)
                        .all(|pair| chars[from + pair[0].1..from + pair[1].0].iter().all(|c| c.is_whitespace()));
                if matches {
                    out.push((from + window[0].0, from + window[window.len() - 1].1));
                }
            }
        }
        out
    }
}

/// Alphanumeric runs as (char start, char end, text).
fn words(s: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, String)> = None;
    let mut n = 0;
    for (i, c) in s.chars().enumerate() {
        n = i + 1;
        if c.is_alphanumeric() {
            cur.get_or_insert_with(|| (i, String::new())).1.push(c);
        } else if let Some((start, w)) = cur.take() {
            out.push((start, i, w));
        }
    }
    if let Some((start, w)) = cur {
        out.push((start, n, w));
    }
    out
}

/// Start of the sentence containing char `at`: just past the last `.`, `!`
/// or `?` that is followed by whitespace, or past a blank line.
fn sentence_start(chars: &[char], at: usize) -> usize {
    let mut i = at;
    while i > 0 {
        let c = chars[i - 1];
        let next_ws = chars.get(i).is_none_or(|n| n.is_whitespace());
        if matches!(c, '.' | '!' | '?') && next_ws {
            return i;
        }
        if c == '\n' && i >= 2 && chars[i - 2] == '\n' {
            return i;
        }
        i -= 1;
    }
    0
}

/// Rule-based NegEx-style classifier.
#[derive(Debug, Clone)]
pub struct RulesProvider {
    negation: TriggerSet,
    speculation: TriggerSet,
}

impl Default for RulesProvider {
    fn default() -> Self {
        RulesProvider::new(TriggerSet::bundled_negation(), TriggerSet::bundled_speculation())
    }
}

impl RulesProvider {
    pub fn new(negation: TriggerSet, speculation: TriggerSet) -> Self {
        RulesProvider { negation, speculation }
    }

    /// The last negation trigger scoping `span`, if any.
    pub fn negation_trigger(&self, text: &str, span: (usize, usize)) -> Option<(usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        self.scoping(&self.negation, &chars, span).last().copied()
    }

    fn scoping(&self, set: &TriggerSet, chars: &[char], span: (usize, usize)) -> Vec<(usize, usize)> {
        let from = sentence_start(chars, span.0);
        set.occurrences(chars, from, span.0)
    }

    /// Absent wins over possible when both kinds of trigger scope a span.
    pub fn classify(&self, text: &str, spans: &[(usize, usize)]) -> Result<Vec<Assertion>, NegationError> {
        let chars: Vec<char> = text.chars().collect();
        validate_spans(chars.len(), spans)?;
        Ok(spans
            .iter()
            .map(|&span| {
                let label = if !self.scoping(&self.negation, &chars, span).is_empty() {
                    AssertionLabel::Absent
                } else if !self.scoping(&self.speculation, &chars, span).is_empty() {
                    AssertionLabel::Possible
                } else {
                    AssertionLabel::Present
                };
                Assertion::certain(label)
            })
            .collect())
    }
}

fn validate_spans(len: usize, spans: &[(usize, usize)]) -> Result<(), NegationError> {
    let mut prev_end = 0;
    for &(start, end) in spans {
        if start >= end || end > len || start < prev_end {
            return Err(NegationError::InvalidSpan { start, end, len });
        }
        prev_end = end;
    }
    Ok(())
}

/// Which classifier produced a set of assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Rules,
    Remote,
    RulesFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classified {
    pub assertions: Vec<Assertion>,
    pub provider: ProviderKind,
    /// True when the remote service was requested but the rules answered.
    pub degraded: bool,
}

pub enum AssertionBackend {
    Rules(RulesProvider),
    Remote { client: AssertionClient, fallback: Option<RulesProvider> },
}

impl AssertionBackend {
    pub fn classify(&self, text: &str, spans: &[(usize, usize)]) -> Result<Classified, NegationError> {
        match self {
            AssertionBackend::Rules(rules) => Ok(Classified {
                assertions: rules.classify(text, spans)?,
                provider: ProviderKind::Rules,
                degraded: false,
            }),
            AssertionBackend::Remote { client, fallback } => {
                validate_spans(text.chars().count(), spans)?;
                match client.classify(text, spans) {
                    Ok(assertions) => Ok(Classified { assertions, provider: ProviderKind::Remote, degraded: false }),
                    Err(e @ NegationError::Remote(_)) => match fallback {
                        Some(rules) => {
                            log::warn!("{e}; falling back to rules");
                            Ok(Classified {
                                assertions: rules.classify(text, spans)?,
                                provider: ProviderKind::RulesFallback,
                                degraded: true,
                            })
                        }
                        None => Err(e),
                    },
                    Err(e) => Err(e),
                }
            }
        }
    }
}

/// Removes absent spans from `text`. With `triggers`, an absent span's scoping
/// negation trigger and the words between it and the span go too, unless that
/// stretch overlaps a retained entity. Whitespace around each cut collapses
/// to one space; the rest of the note is left byte-for-byte.
pub fn scrub_note(
    text: &str,
    spans: &[(usize, usize)],
    assertions: &[Assertion],
    triggers: Option<&RulesProvider>,
) -> String {
    assert_eq!(spans.len(), assertions.len(), "spans and assertions must align");
    let chars: Vec<char> = text.chars().collect();
    let kept: Vec<(usize, usize)> =
        spans.iter().zip(assertions).filter(|(_, a)| a.label != AssertionLabel::Absent).map(|(&s, _)| s).collect();
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    for (&(s, e), a) in spans.iter().zip(assertions) {
        if a.label != AssertionLabel::Absent {
            continue;
        }
        let mut start = s;
        if let Some(rules) = triggers {
            if let Some((ts, _)) = rules.negation_trigger(text, (s, e)) {
                if !kept.iter().any(|&(ks, ke)| ks < s && ke > ts) {
                    start = ts;
                }
            }
        }
        match cuts.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(e),
            _ => cuts.push((start, e)),
        }
    }
    if cuts.is_empty() {
        return text.to_string();
    }

    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for &(s, e) in &cuts {
        let left: String = chars[pos..s].iter().collect();
        out.push_str(left.trim_end());
        let mut next = e;
        while next < chars.len() && chars[next].is_whitespace() {
            next += 1;
        }
        let last_left = out.chars().next_back();
        let first_right = chars.get(next).copied();
        let space = match (last_left, first_right) {
            (None, _) | (_, None) => false,
            (Some(l), Some(r)) => !matches!(r, '.' | ',' | ';' | ':' | '!' | '?' | ')') && l != '(',
        };
        let had_ws = (pos < s && chars[s - 1].is_whitespace()) || next > e;
        if space && had_ws {
            out.push(' ');
        }
        pos = next;
    }
    out.extend(&chars[pos..]);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertedSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub assertion: Assertion,
}

/// Every intermediate artifact of one pipeline run, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NriemtTrace {
    pub topic_id: u32,
    pub tag_reply: String,
    pub tag_keys: Vec<CacheKey>,
    pub tagged_text: String,
    pub tag_warnings: Vec<String>,
    pub entities: Vec<AssertedSpan>,
    pub provider: ProviderKind,
    pub degraded: bool,
    pub scrub_triggers: bool,
    pub cleaned_note: String,
    pub extraction_reply: String,
    pub extraction_keys: Vec<CacheKey>,
    pub keywords: KeywordList,
}

impl NriemtTrace {
    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf, NegationError> {
        std::fs::create_dir_all(dir).map_err(|e| NegationError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("{}.json", self.topic_id));
        let mut body = serde_json::to_string_pretty(self).expect("trace serializes");
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| NegationError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn absent_texts(&self) -> Vec<&str> {
        self.entities.iter().filter(|e| e.assertion.label == AssertionLabel::Absent).map(|e| e.text.as_str()).collect()
    }
}

pub struct NriemtPipeline {
    pub tag_strategy: PromptStrategy,
    pub extract_strategy: PromptStrategy,
    pub backend: Arc<AssertionBackend>,
    pub scrub_triggers: Option<RulesProvider>,
}

impl NriemtPipeline {
    /// Tag entities, classify them, drop the absent ones from the de-tagged
    /// note, then extract keywords from what is left.
    pub fn run(&self, gateway: &Gateway, note: &PatientTopic) -> Result<NriemtTrace, NegationError> {
        let tag = gateway.run_conversation(&self.tag_strategy, note)?;
        let tag_reply = tag.replies.last().cloned().unwrap_or_default();
        let tagged: TaggedNote = parse_entity_tags(&tag_reply);
        let classified = self.backend.classify(&tagged.text, &tagged.spans)?;
        let cleaned = scrub_note(&tagged.text, &tagged.spans, &classified.assertions, self.scrub_triggers.as_ref());
        let cleaned_topic = PatientTopic { id: note.id, text: cleaned.clone() };
        let extraction = gateway.run_conversation(&self.extract_strategy, &cleaned_topic)?;
        let extraction_reply = extraction.replies.last().cloned().unwrap_or_default();
        let keywords = parse_keyword_list(&extraction_reply)?;
        let entities = tagged
            .spans
            .iter()
            .zip(&classified.assertions)
            .enumerate()
            .map(|(i, (&(start, end), &assertion))| AssertedSpan { start, end, text: tagged.span_text(i), assertion })
            .collect();
        Ok(NriemtTrace {
            topic_id: note.id,
            tag_reply,
            tag_keys: tag.keys,
            tagged_text: tagged.text,
            tag_warnings: tagged.warnings,
            entities,
            provider: classified.provider,
            degraded: classified.degraded,
            scrub_triggers: self.scrub_triggers.is_some(),
            cleaned_note: cleaned,
            extraction_reply,
            extraction_keys: extraction.keys,
            keywords,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span_of(text: &str, needle: &str) -> (usize, usize) {
        let b = text.find(needle).unwrap();
        let s = text[..b].chars().count();
        (s, s + needle.chars().count())
    }

    fn label(text: &str, needle: &str) -> AssertionLabel {
        RulesProvider::default().classify(text, &[span_of(text, needle)]).unwrap()[0].label
    }

    #[test]
    fn rule_examples() {
        let s = "The patient recovered during the night and now denies any shortness of breath.";
        assert_eq!(label(s, "shortness of breath"), AssertionLabel::Absent);
        assert_eq!(label("presents with fever", "fever"), AssertionLabel::Present);
        assert_eq!(label("possible pneumonia", "pneumonia"), AssertionLabel::Possible);
        assert_eq!(label("Negative for HIV. Cough noted.", "Cough"), AssertionLabel::Present);
        assert_eq!(label("Negative  for HIV", "HIV"), AssertionLabel::Absent);
        assert_eq!(label("negative, for HIV", "HIV"), AssertionLabel::Present);
        assert_eq!(label("Knot in the neck", "neck"), AssertionLabel::Present);
        assert_eq!(label("No fever; possible rash", "rash"), AssertionLabel::Absent);
        assert_eq!(label("Temp 38.5 with no chills", "chills"), AssertionLabel::Absent);
        assert_eq!(label("Rule out MI", "MI"), AssertionLabel::Possible);
    }

    #[test]
    fn invalid_spans_rejected() {
        let r = RulesProvider::default();
        assert!(r.classify("abc", &[(0, 4)]).is_err());
        assert!(r.classify("abc", &[(1, 1)]).is_err());
        assert!(r.classify("abcdef", &[(0, 3), (2, 4)]).is_err());
        assert!(r.classify("", &[]).unwrap().is_empty());
    }

    #[test]
    fn scrub_cases() {
        let s = "now denies any shortness of breath.";
        let sp = [span_of(s, "shortness of breath")];
        let absent = [Assertion::certain(AssertionLabel::Absent)];
        assert_eq!(scrub_note(s, &sp, &absent, None), "now denies any.");
        let present = [Assertion::certain(AssertionLabel::Present)];
        assert_eq!(scrub_note(s, &sp, &present, None), s);
        assert_eq!(scrub_note(s, &sp, &absent, Some(&RulesProvider::default())), "now.");

        let s = "no fever,  cough and  no rash today";
        let sp = [span_of(s, "fever"), span_of(s, "cough"), span_of(s, "rash")];
        let a = [
            Assertion::certain(AssertionLabel::Absent),
            Assertion::certain(AssertionLabel::Present),
            Assertion::certain(AssertionLabel::Absent),
        ];
        assert_eq!(scrub_note(s, &sp, &a, None), "no,  cough and  no today");
        assert_eq!(scrub_note(s, &sp, &a, Some(&RulesProvider::default())), ",  cough and today");

        // The trigger's reach would cover the retained "fever", so only the span goes.
        let s = "no fever or cough";
        let sp = [span_of(s, "fever"), span_of(s, "cough")];
        let a = [Assertion::certain(AssertionLabel::Present), Assertion::certain(AssertionLabel::Absent)];
        assert_eq!(scrub_note(s, &sp, &a, Some(&RulesProvider::default())), "no fever or");

        let s = "fever cough";
        let sp = [span_of(s, "fever"), span_of(s, "cough")];
        let all = [Assertion::certain(AssertionLabel::Absent); 2];
        assert_eq!(scrub_note(s, &sp, &all, None), "");
    }

    #[test]
    fn bundled_trigger_lists() {
        assert_eq!(TriggerSet::bundled_negation().len(), 6);
        assert_eq!(TriggerSet::bundled_speculation().len(), 3);
    }

    proptest! {
        #[test]
        fn scrub_without_absent_is_identity(text in "[a-z .,\n]{0,60}", n in 0usize..4) {
            let len = text.chars().count();
            let spans: Vec<(usize, usize)> = (0..n).map(|i| (i * len / 4, i * len / 4 + 1)).filter(|s| s.1 <= len).collect();
            let mut spans = spans;
            spans.dedup();
            let a = vec![Assertion::certain(AssertionLabel::Present); spans.len()];
            prop_assert_eq!(scrub_note(&text, &spans, &a, None), text);
        }

        #[test]
        fn scrubbed_span_text_is_gone(pre in "[a-z]{1,8}( [a-z]{1,8}){0,3}", post in "( [a-z]{1,8}){0,3}") {
            let text = format!("{pre} ZZENTITY{post}.");
            let span = span_of(&text, "ZZENTITY");
            let out = scrub_note(&text, &[span], &[Assertion::certain(AssertionLabel::Absent)], None);
            prop_assert!(!out.contains("ZZENTITY"));
            prop_assert!(!out.contains("  "));
        }

        #[test]
        fn rules_deterministic(text in "[a-z .]{1,60}") {
            let len = text.chars().count();
            let spans = [(len - 1, len)];
            let r = RulesProvider::default();
            prop_assert_eq!(r.classify(&text, &spans).unwrap(), r.classify(&text, &spans).unwrap());
        }
    }
}
