use thiserror::Error;

/// Errors raised anywhere in the reduction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("rank deficiency: {0}")]
    Rank(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("ill-conditioned eigenbasis (condition number {0:.3e})")]
    Conditioning(f64),
    #[error("singular Sylvester operator: {0}")]
    Singular(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("snapshot stream failed at t = {time}: {source}")]
    Stream { time: f64, source: Box<Error> },
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
    #[error("solution diverged at step {step}")]
    Divergence { step: usize },
    #[error("degenerate interpolation selection: {0}")]
    DegenerateSelection(String),
    #[error("memory guard: {0}")]
    MemoryGuard(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("report error: {0}")]
    Report(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (divergence, singular operators,
    /// conditioning), as opposed to bad input or bad files.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Rank(_)
            | Error::Conditioning(_)
            | Error::Singular(_)
            | Error::NoConvergence(_)
            | Error::Divergence { .. }
            | Error::DegenerateSelection(_)
            | Error::Assembly(_)
            | Error::NonFinite(_) => true,
            Error::Stream { source, .. } | Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    /// Innermost error, through stream and stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stream { source, .. } | Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Labels the pipeline stage an error came from.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<V> = std::result::Result<V, Error>;
