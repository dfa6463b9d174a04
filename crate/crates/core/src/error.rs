use std::fmt;

use thiserror::Error;

/// A single validation failure, located by a field path such as `bundles[2].members[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

/// All problems found while validating a [`ProblemSpec`](crate::ProblemSpec).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub issues: Vec<Issue>,
}

impl Diagnostics {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// True if any issue carries exactly this message.
    pub fn has(&self, message: &str) -> bool {
        self.issues.iter().any(|i| i.message == message)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}: {}", issue.path, issue.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    Invalid(Diagnostics),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("endowment {d} outside domain [{lo}, {hi}]")]
    OutOfDomain { d: f64, lo: f64, hi: f64 },

    #[error("duplicate knot abscissa {0}")]
    DuplicateKnot(f64),

    #[error("values decrease on interval {interval}")]
    NonMonotone { interval: usize },

    #[error("bid {bid} exceeds endowment {endowment}")]
    BidExceedsEndowment { bid: f64, endowment: f64 },

    #[error("no value entry for stage {stage}, holdings {holdings:#b}")]
    MissingComponent { stage: usize, holdings: u32 },

    #[error("incomplete delta ledger: stage {0} has no entry")]
    IncompleteLedger(usize),

    #[error("instance mismatch: {0}")]
    InstanceMismatch(String),

    #[error("malformed solution file: {0}")]
    MalformedSolution(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
