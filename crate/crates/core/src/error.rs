use std::path::PathBuf;

use crate::formulation::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("schedule rejected with {} violation(s): {}", .0.len(), summarize(.0))]
    ScheduleRejected(Vec<Violation>),

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("search space too large for exhaustive enumeration: {bits:.1} bits > {limit} bits")]
    SearchSpaceTooLarge { bits: f64, limit: u32 },

    #[error("exact assignment limited to {limit} passengers per corridor, got {demand}")]
    ExactAssignmentTooLarge { demand: u64, limit: u64 },

    #[error("LP parse error at line {line}: {message}")]
    LpParse { line: usize, message: String },

    #[error("no runs found in {0}")]
    NoRuns(PathBuf),

    #[error("malformed file {path}: {message}")]
    MalformedFile { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

fn summarize(violations: &[Violation]) -> String {
    let mut out = violations.iter().take(3).map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
    if violations.len() > 3 {
        out.push_str("; ...");
    }
    out
}
