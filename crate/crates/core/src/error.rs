use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate element {element}: {reason}")]
    DegenerateElement { element: usize, reason: String },

    #[error("simulation unstable at step {step}: {reason}")]
    Unstable { step: usize, reason: String },

    #[error("vertex {vertex} left the simulation domain at step {step}")]
    OutOfDomain { step: usize, vertex: usize },

    #[error("time step violates the CFL bound: dt = {dt}, limit = {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("point set is empty")]
    EmptySet,

    #[error("no simulated frame for observation time indices {0:?}")]
    MissingFrames(Vec<usize>),

    #[error("tape mismatch: {0}")]
    TapeMismatch(String),

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error("infeasible trajectory: {0}")]
    InfeasibleTrajectory(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("observation: {0}")]
    Observation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable category, printed by the command line driver.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::DegenerateElement { .. } => "degenerate",
            Error::Unstable { .. } => "unstable",
            Error::OutOfDomain { .. } => "out-of-domain",
            Error::Cfl { .. } => "cfl",
            Error::EmptySet => "empty-set",
            Error::MissingFrames(_) => "missing-frames",
            Error::TapeMismatch(_) => "tape",
            Error::NonFiniteGradient(_) => "gradient",
            Error::InfeasibleTrajectory(_) => "trajectory",
            Error::Stats(_) => "stats",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Observation(_) => "observation",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
