use std::fmt;

use ctlab_core::corpus::CorpusError;
use ctlab_core::eval::EvalError;
use ctlab_core::gateway::GatewayError;
use ctlab_core::index::IndexError;
use ctlab_core::negation::NegationError;
use ctlab_core::parsing::ParseError;
use ctlab_core::prompts::PromptError;

/// Machine-parsable failure class, printed as `error[<class>]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Usage,
    Config,
    Io,
    Data,
    Index,
    Gateway,
    ReplayMiss,
    Assertion,
    Parse,
    Eval,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Usage => "usage",
            Class::Config => "config",
            Class::Io => "io",
            Class::Data => "data",
            Class::Index => "index",
            Class::Gateway => "gateway",
            Class::ReplayMiss => "replay-miss",
            Class::Assertion => "assertion",
            Class::Parse => "parse",
            Class::Eval => "eval",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Class::Usage | Class::Config => 2,
            Class::Io => 3,
            Class::Data | Class::Parse => 4,
            Class::Index => 5,
            Class::Gateway | Class::ReplayMiss | Class::Assertion => 6,
            Class::Eval => 7,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub message: String,
}

impl Failure {
    pub fn new(class: Class, message: impl Into<String>) -> Self {
        Failure { class, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Class::Config, message)
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        Self::new(Class::Io, format!("{}: {e}", path.display()))
    }

    pub fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }

    /// `error[class]: message` with line breaks flattened.
    pub fn line(&self) -> String {
        let msg: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {msg}", self.class.as_str())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

pub type Result<T> = std::result::Result<T, Failure>;

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let class = if matches!(e, CorpusError::Io { .. }) { Class::Io } else { Class::Data };
        Failure::new(class, e.to_string())
    }
}

impl From<IndexError> for Failure {
    fn from(e: IndexError) -> Self {
        let class = if matches!(e, IndexError::Io { .. }) { Class::Io } else { Class::Index };
        Failure::new(class, e.to_string())
    }
}

impl From<GatewayError> for Failure {
    fn from(e: GatewayError) -> Self {
        let class = match e {
            GatewayError::ReplayMiss { .. } => Class::ReplayMiss,
            GatewayError::Config(_) | GatewayError::Prompt(_) => Class::Config,
            _ => Class::Gateway,
        };
        Failure::new(class, e.to_string())
    }
}

impl From<PromptError> for Failure {
    fn from(e: PromptError) -> Self {
        Failure::new(Class::Config, e.to_string())
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure::new(Class::Parse, e.to_string())
    }
}

impl From<NegationError> for Failure {
    fn from(e: NegationError) -> Self {
        match e {
            NegationError::Gateway(g) => g.into(),
            NegationError::Parse(p) => p.into(),
            NegationError::Triggers { .. } => Failure::new(Class::Config, e.to_string()),
            NegationError::Io(_) => Failure::new(Class::Io, e.to_string()),
            _ => Failure::new(Class::Assertion, e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::new(Class::Eval, e.to_string())
    }
}
