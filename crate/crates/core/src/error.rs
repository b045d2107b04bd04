use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("estimator rule not applicable: {0}")]
    RuleInapplicable(String),

    #[error("invalid detector state: {0}")]
    InvalidState(String),

    #[error("candidate bank overflow: {0} candidates exceed the configured cap")]
    CandidateOverflow(usize),

    #[error("no feasible shrinkage factor on the grid")]
    NoFeasibleFactor,

    #[error("calibration bracket failure after {expansions} expansions: ARL {arl_low:.3} at B={low:.4}, ARL {arl_high:.3} at B={high:.4}, target {target}")]
    BracketFailure {
        expansions: u32,
        low: f64,
        high: f64,
        arl_low: f64,
        arl_high: f64,
        target: f64,
    },

    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported snapshot schema version {found} (supported up to {supported})")]
    SnapshotVersion { found: u32, supported: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
