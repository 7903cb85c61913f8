use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no candidates")]
    NoCandidates,
    #[error("unscored candidate: {0}")]
    UnscoredCandidate(String),
    #[error("need at least {needed} scored candidates, have {have}")]
    NotEnoughCandidates { needed: usize, have: usize },
    #[error("budget smaller than depth (total_n={total_n}, depth={depth})")]
    BudgetSmallerThanDepth { total_n: usize, depth: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("prand requires preference (prompt {0})")]
    PrandRequiresPreference(String),
    #[error("no refinement layer")]
    NoRefinementLayer,
    #[error("unequal budgets: {0}")]
    UnequalBudgets(String),
    #[error("missing placeholder {{{0}}}")]
    MissingComponent(&'static str),
    #[error("template {kind}: {message}")]
    Template { kind: String, message: String },
    #[error("empty catalog: {0}")]
    EmptyCatalog(PathBuf),
    #[error("malformed parent: {0}")]
    MalformedParent(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("backend unavailable after {attempts} attempts: {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("backend: {0}")]
    Backend(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("data: {0}")]
    Data(String),
    #[error("duplicate iteration {0}")]
    DuplicateIteration(u32),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a generation or reward backend, as opposed to bad
    /// input data or configuration.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Http { .. } | Error::BackendUnavailable { .. } | Error::Backend(_)
        )
    }

    /// Process exit code: 1 usage, 2 backend failure, 3 data error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Schedule(_)
            | Error::BudgetSmallerThanDepth { .. }
            | Error::PrandRequiresPreference(_)
            | Error::UnequalBudgets(_) => 1,
            e if e.is_backend() => 2,
            _ => 3,
        }
    }
}
