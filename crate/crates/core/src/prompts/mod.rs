//! Prompt strategies: system role, turn templates, decoding parameters and the
//! parser that consumes each reply.
//!
//! Templates live in text files pinned by SHA-256 in `manifest.toml`. The
//! bundled set is compiled in; a directory with the same layout can replace it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::PatientTopic;

pub const NOTE_PLACEHOLDER: &str = "{clinical_note}";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown prompt strategy '{0}'")]
    UnknownStrategy(String),
    #[error("unknown parser '{0}'")]
    UnknownParser(String),
    #[error("prompt configuration: {0}")]
    Config(String),
    #[error("checksum mismatch for {file}: manifest {expected}, file {actual}")]
    Checksum { file: String, expected: String, actual: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("turn {turn} requested but strategy {strategy} has {turns} turn(s)")]
    NoSuchTurn { strategy: StrategyId, turn: usize, turns: usize },
    #[error("clinical note is empty")]
    EmptyNote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyId {
    #[serde(rename = "QGMT")]
    Qgmt,
    #[serde(rename = "QGGT")]
    Qggt,
    #[serde(rename = "IEG")]
    Ieg,
    #[serde(rename = "IEMT")]
    Iemt,
    #[serde(rename = "IEMDMT")]
    Iemdmt,
    #[serde(rename = "NRIEMT_TAG")]
    NriemtTag,
    #[serde(rename = "FEWSHOT_QG")]
    FewshotQg,
    #[serde(rename = "TRIAL_TOPIC_GEN")]
    TrialTopicGen,
    #[serde(rename = "EXPLICIT_EXPAND")]
    ExplicitExpand,
}

impl StrategyId {
    pub const ALL: [StrategyId; 9] = [
        StrategyId::Qgmt,
        StrategyId::Qggt,
        StrategyId::Ieg,
        StrategyId::Iemt,
        StrategyId::Iemdmt,
        StrategyId::NriemtTag,
        StrategyId::FewshotQg,
        StrategyId::TrialTopicGen,
        StrategyId::ExplicitExpand,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Qgmt => "QGMT",
            StrategyId::Qggt => "QGGT",
            StrategyId::Ieg => "IEG",
            StrategyId::Iemt => "IEMT",
            StrategyId::Iemdmt => "IEMDMT",
            StrategyId::NriemtTag => "NRIEMT_TAG",
            StrategyId::FewshotQg => "FEWSHOT_QG",
            StrategyId::TrialTopicGen => "TRIAL_TOPIC_GEN",
            StrategyId::ExplicitExpand => "EXPLICIT_EXPAND",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PromptError::UnknownStrategy(s.to_string()))
    }
}

/// Which response parser consumes a turn's reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserId {
    KeywordList,
    /// Initial and refined `[query_keywords]` answers.
    BracketedQueries,
    PatientRecord,
    EntityTags,
    /// One trial topic per line.
    TrialTopics,
}

impl FromStr for ParserId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keyword_list" => Ok(ParserId::KeywordList),
            "bracketed_queries" => Ok(ParserId::BracketedQueries),
            "patient_record" => Ok(ParserId::PatientRecord),
            "entity_tags" => Ok(ParserId::EntityTags),
            "trial_topics" => Ok(ParserId::TrialTopics),
            other => Err(PromptError::UnknownParser(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl DecodingParams {
    pub fn new(temperature: f64, frequency_penalty: f64, presence_penalty: f64) -> Result<Self, PromptError> {
        let p = DecodingParams { temperature, frequency_penalty, presence_penalty };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(PromptError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        for (name, v) in [("frequency_penalty", self.frequency_penalty), ("presence_penalty", self.presence_penalty)] {
            if !(-2.0..=2.0).contains(&v) {
                return Err(PromptError::Config(format!("{name} must lie in [-2, 2], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptStrategy {
    pub id: StrategyId,
    pub system_role: String,
    pub turns: Vec<String>,
    pub parsers: Vec<ParserId>,
    pub params: DecodingParams,
}

impl PromptStrategy {
    pub fn with_system_role(&self, role: impl Into<String>) -> Self {
        PromptStrategy { system_role: role.into(), ..self.clone() }
    }

    pub fn with_params(&self, params: DecodingParams) -> Self {
        PromptStrategy { params, ..self.clone() }
    }

    pub fn turn_count(&self) -> usize {
        self.turns.len()
    }

    /// First-turn conversation: system message and the first user message.
    pub fn render(&self, note: &PatientTopic) -> Result<Vec<Message>, PromptError> {
        self.render_turn(note, &[])
    }

    /// Full message history for turn `prior_replies.len()`: the system role,
    /// then each earlier user turn followed by its reply, then the next user turn.
    pub fn render_turn(&self, note: &PatientTopic, prior_replies: &[String]) -> Result<Vec<Message>, PromptError> {
        if note.text.trim().is_empty() {
            return Err(PromptError::EmptyNote);
        }
        let turn = prior_replies.len();
        if turn >= self.turns.len() {
            return Err(PromptError::NoSuchTurn { strategy: self.id, turn: turn + 1, turns: self.turns.len() });
        }
        let mut messages = vec![Message::system(self.system_role.clone())];
        for (i, template) in self.turns[..=turn].iter().enumerate() {
            messages.push(Message::user(template.replacen(NOTE_PLACEHOLDER, &note.text, 1)));
            if i < turn {
                messages.push(Message::assistant(prior_replies[i].clone()));
            }
        }
        Ok(messages)
    }

    fn validate(&self) -> Result<(), PromptError> {
        if self.turns.is_empty() {
            return Err(PromptError::Config(format!("{}: no turns", self.id)));
        }
        if self.parsers.len() != self.turns.len() {
            return Err(PromptError::Config(format!(
                "{}: {} turn(s) but {} parser(s)",
                self.id,
                self.turns.len(),
                self.parsers.len()
            )));
        }
        for (i, t) in self.turns.iter().enumerate() {
            for m in placeholder_re().find_iter(t) {
                if m.as_str() != NOTE_PLACEHOLDER {
                    return Err(PromptError::Config(format!(
                        "{} turn {}: unknown placeholder {}",
                        self.id,
                        i + 1,
                        m.as_str()
                    )));
                }
            }
            let count = t.matches(NOTE_PLACEHOLDER).count();
            let expected = usize::from(i == 0);
            if count != expected {
                return Err(PromptError::Config(format!(
                    "{} turn {}: expected {expected} {NOTE_PLACEHOLDER} placeholder(s), found {count}",
                    self.id,
                    i + 1
                )));
            }
        }
        self.params.validate()
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{[A-Za-z_][A-Za-z0-9_]*\}").unwrap())
}

#[derive(Debug, Deserialize)]
struct Manifest {
    strategy: Vec<ManifestStrategy>,
    checksums: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct ManifestStrategy {
    id: String,
    role: String,
    turns: Vec<String>,
    parsers: Vec<String>,
    temperature: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
}

macro_rules! bundled_files {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../data/prompts/", $name)))),*]
    };
}

const BUNDLED: &[(&str, &str)] = bundled_files!(
    "manifest.toml",
    "roles/generic.txt",
    "roles/medical.txt",
    "roles/medical_trials.txt",
    "roles/qgmt.txt",
    "qgmt.turn1.txt",
    "qggt.turn1.txt",
    "ieg.turn1.txt",
    "ieg.turn2.txt",
    "iemt.turn1.txt",
    "iemdmt.turn1.txt",
    "nriemt_tag.turn1.txt",
    "fewshot_qg.turn1.txt",
    "trial_topic_gen.turn1.txt",
    "explicit_expand.turn1.txt",
);

/// Named roles available for override, keyed by file stem (`generic`, `medical`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRegistry {
    strategies: BTreeMap<StrategyId, PromptStrategy>,
    roles: BTreeMap<String, String>,
}

impl PromptRegistry {
    /// The compiled-in templates, checksum-verified.
    pub fn bundled() -> Result<Self, PromptError> {
        Self::load_with(|name| {
            BUNDLED
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, text)| text.to_string())
                .ok_or_else(|| PromptError::Config(format!("template file {name} is not bundled")))
        })
    }

    /// Loads `manifest.toml` and the files it references from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::load_with(|name| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map_err(|source| PromptError::Io { path: path.display().to_string(), source })
        })
    }

    fn load_with(read: impl Fn(&str) -> Result<String, PromptError>) -> Result<Self, PromptError> {
        let manifest: Manifest =
            toml::from_str(&read("manifest.toml")?).map_err(|e| PromptError::Config(format!("manifest.toml: {e}")))?;
        let load = |name: &str| -> Result<String, PromptError> {
            let text = read(name)?;
            let expected =
                manifest.checksums.get(name).ok_or_else(|| PromptError::Config(format!("no checksum for {name}")))?;
            let actual = hex::encode(Sha256::digest(text.as_bytes()));
            if !expected.eq_ignore_ascii_case(&actual) {
                return Err(PromptError::Checksum { file: name.into(), expected: expected.clone(), actual });
            }
            Ok(text)
        };

        let mut strategies = BTreeMap::new();
        let mut roles = BTreeMap::new();
        for s in &manifest.strategy {
            let id: StrategyId = s.id.parse()?;
            let system_role = load(&s.role)?;
            let role_name = Path::new(&s.role).file_stem().and_then(|n| n.to_str()).unwrap_or(&s.role).to_string();
            roles.insert(role_name, system_role.clone());
            let strategy = PromptStrategy {
                id,
                system_role,
                turns: s.turns.iter().map(|t| load(t)).collect::<Result<_, _>>()?,
                parsers: s.parsers.iter().map(|p| p.parse()).collect::<Result<_, _>>()?,
                params: DecodingParams {
                    temperature: s.temperature,
                    frequency_penalty: s.frequency_penalty,
                    presence_penalty: s.presence_penalty,
                },
            };
            strategy.validate()?;
            if strategies.insert(id, strategy).is_some() {
                return Err(PromptError::Config(format!("strategy {id} defined twice")));
            }
        }
        Ok(PromptRegistry { strategies, roles })
    }

    pub fn get(&self, id: StrategyId) -> Result<&PromptStrategy, PromptError> {
        self.strategies.get(&id).ok_or_else(|| PromptError::UnknownStrategy(id.to_string()))
    }

    pub fn get_by_name(&self, name: &str) -> Result<&PromptStrategy, PromptError> {
        self.get(name.parse()?)
    }

    pub fn strategies(&self) -> impl Iterator<Item = &PromptStrategy> + '_ {
        self.strategies.values()
    }

    pub fn role(&self, name: &str) -> Option<&str> {
        self.roles.get(name).map(String::as_str)
    }

    pub fn role_names(&self) -> impl Iterator<Item = &str> + '_ {
        self.roles.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note() -> PatientTopic {
        PatientTopic { id: 1, text: "Patient with {odd} braces and  spacing.".into() }
    }

    #[test]
    fn bundled_loads_all_strategies() {
        let reg = PromptRegistry::bundled().unwrap();
        assert_eq!(reg.strategies().count(), StrategyId::ALL.len());
        assert_eq!(reg.get(StrategyId::Ieg).unwrap().turn_count(), 2);
    }

    #[test]
    fn multi_turn_needs_prior_reply() {
        let reg = PromptRegistry::bundled().unwrap();
        let ieg = reg.get(StrategyId::Ieg).unwrap();
        let t1 = ieg.render(&note()).unwrap();
        assert_eq!(t1.len(), 2);
        let t2 = ieg.render_turn(&note(), &["a, b".into()]).unwrap();
        assert_eq!(
            t2.iter().map(|m| m.role).collect::<Vec<_>>(),
            [Role::System, Role::User, Role::Assistant, Role::User]
        );
        assert_eq!(t2[2].content, "a, b");
        assert!(ieg.render_turn(&note(), &["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn note_substituted_verbatim() {
        let reg = PromptRegistry::bundled().unwrap();
        for s in reg.strategies() {
            let msgs = s.render(&note()).unwrap();
            assert!(msgs[1].content.contains(&note().text));
            assert!(!msgs[1].content.contains(NOTE_PLACEHOLDER));
        }
    }

    #[test]
    fn parse_ids() {
        assert_eq!("nriemt_tag".parse::<StrategyId>().unwrap(), StrategyId::NriemtTag);
        assert!("QGXT".parse::<StrategyId>().is_err());
        assert!("yaml".parse::<ParserId>().is_err());
    }

    #[test]
    fn params_validated() {
        assert!(DecodingParams::new(0.0, 2.5, 0.0).is_err());
        assert!(DecodingParams::new(-0.1, 0.0, 0.0).is_err());
        assert!(DecodingParams::new(0.0, 2.0, -2.0).is_ok());
    }
}
