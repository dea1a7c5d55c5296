use thiserror::Error;

use crate::graph::Diagnostic;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the pipeline. Structural problems in input files are
/// reported as [`Diagnostic`] lists inside [`Error::Invalid`]; everything else
/// maps to one variant per failure mode.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("graph validation failed:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),

    #[error("unknown {kind} id: {id}")]
    UnknownId { kind: &'static str, id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot split a perception subgraph with zero know edges")]
    EmptySplit,

    #[error("no negatives available for learner {learner}")]
    NoNegativesAvailable { learner: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate labels: need at least one positive and one negative")]
    DegenerateLabels,

    #[error("domain error: {what} must be in {range}, got {value}")]
    Domain {
        what: &'static str,
        range: &'static str,
        value: f64,
    },

    #[error("undefined margin: {margin} is zero")]
    UndefinedMargin { margin: &'static str },

    #[error("learner {learner} has no responses")]
    NoResponses { learner: String },

    #[error("inferred states overlap explicit report for learner {learner}, concept {concept}")]
    ProfileOverlap { learner: String, concept: String },

    #[error("inferred states do not cover the latent set exactly for learner {learner}")]
    ProfileIncomplete { learner: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("checkpoint fingerprint {checkpoint} does not match graph fingerprint {graph}")]
    FingerprintMismatch { checkpoint: String, graph: String },

    #[error("non-finite value encountered during {0}")]
    NonFinite(&'static str),

    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Stable machine-readable code for scripted consumers.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
            Error::Invalid(_) => "validation",
            Error::UnknownId { .. } => "unknown_id",
            Error::Config(_) => "config",
            Error::EmptySplit => "empty_split",
            Error::NoNegativesAvailable { .. } => "no_negatives_available",
            Error::EmptyInput(_) => "empty_input",
            Error::DegenerateLabels => "degenerate_labels",
            Error::Domain { .. } => "domain",
            Error::UndefinedMargin { .. } => "undefined_margin",
            Error::NoResponses { .. } => "no_responses",
            Error::ProfileOverlap { .. } => "profile_overlap",
            Error::ProfileIncomplete { .. } => "profile_incomplete",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::FingerprintMismatch { .. } => "fingerprint_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::Other(_) => "other",
        }
    }
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
