use thiserror::Error;

/// Errors raised anywhere in the traversal pipeline.
#[derive(Debug, Error)]
pub enum LgtError {
    /// A layer revelation or raw graph input broke its structural contract.
    #[error("malformed input: {0}")]
    MalformedInput(String),

    /// Every leaf of the last layer is a dead-end; the target is unreachable.
    #[error("traversal terminated at layer {layer}: no active leaf remains")]
    TraversalTerminated { layer: usize },

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("instance generation failed: {0}")]
    GenerationFailed(String),

    /// Instance file could not be parsed as JSON.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Instance file parsed but its content is invalid.
    #[error("invalid instance at layer {layer}, entry {entry} ({field}): {message}")]
    InvalidInstance {
        layer: usize,
        entry: usize,
        field: &'static str,
        message: String,
    },

    #[error("oracle did not converge after {iterations} iterations (last improvement {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    /// Finite-difference step cannot resolve the derivative to the requested accuracy.
    #[error("finite difference diagnostic: {0}")]
    FiniteDifference(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<LgtError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LgtError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ LgtError::AtStep { .. } => e,
            e => LgtError::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// True when the error (possibly wrapped with a step index) signals a dead traversal.
    pub fn is_terminated(&self) -> bool {
        match self {
            LgtError::TraversalTerminated { .. } => true,
            LgtError::AtStep { source, .. } => source.is_terminated(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, LgtError>;
