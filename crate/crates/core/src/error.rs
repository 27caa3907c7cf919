use thiserror::Error;

use crate::domain::Violation;

#[derive(Debug, Error)]
pub enum ScoopError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("syntax error in {what} {input:?}: {message}")]
    Syntax {
        what: &'static str,
        input: String,
        message: String,
    },

    #[error("invalid domain: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("vacuous instance: {0}")]
    VacuousInstance(String),

    #[error("inconsistent domain: no hypothesis is consistent with the known rules")]
    InconsistentDomain,

    #[error("evidence contradicts prior: every hypothesis has zero likelihood")]
    EvidenceContradictsPrior,

    #[error("state explosion: more than {cap} reachable states")]
    StateExplosion { cap: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unknown hypothesis {0:?}")]
    UnknownHypothesis(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("empty refinement proposal")]
    EmptyProposal,

    #[error("reasoner error: {0}")]
    Reasoner(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl ScoopError {
    pub fn syntax(what: &'static str, input: &str, message: impl Into<String>) -> Self {
        ScoopError::Syntax {
            what,
            input: input.to_string(),
            message: message.into(),
        }
    }

    pub fn from_json(err: serde_json::Error) -> Self {
        ScoopError::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ScoopError>;
