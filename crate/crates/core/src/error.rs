use std::path::PathBuf;

use thiserror::Error;

/// A single failed scenario constraint, naming the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl Violation {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", join(.0))]
    InvalidScenario(Vec<Violation>),

    #[error(
        "device placement infeasible: no position satisfies the {sensitivity_dbm} dBm sensitivity"
    )]
    PlacementInfeasible { sensitivity_dbm: f64 },

    #[error("invalid quantile {0}: must lie in (0, 1]")]
    InvalidQuantile(f64),

    #[error("unsupported path-loss model `{0}`")]
    UnsupportedModel(String),

    #[error("unknown preset `{0}` (expected device1 or device2)")]
    UnknownPreset(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("cannot write {}: {source}", .path.display())]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read {}: {source}", .path.display())]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
