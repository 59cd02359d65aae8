use thiserror::Error;

use crate::fork::ProofTrace;

/// Errors produced by the tree, convexity, certification and optimisation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tree of depth {depth} has too many vertices for the index type")]
    TreeTooLarge { depth: u32 },

    #[error("vertex {vertex} is not in a tree with {count} vertices")]
    InvalidVertex { vertex: usize, count: usize },

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("vertices {u} and {v} are mapped to the same point")]
    DegenerateEmbedding { u: usize, v: usize },

    #[error("tree of depth 0 has no vertex pairs")]
    NoPairs,

    #[error("malformed selection: {0}")]
    Selection(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("no positive fork constant satisfies margin tau = {tau}")]
    InfeasibleMargin { tau: f64 },

    #[error("fork hypothesis violated: {message}")]
    Hypothesis {
        message: String,
        trace: Option<Box<ProofTrace>>,
    },

    #[error("fork lemma violated at {fork:?}: kept norm {kept_norm} exceeds bound {bound}")]
    LemmaViolation {
        fork: [usize; 4],
        kept_norm: f64,
        bound: f64,
    },

    #[error("extraction contract violated: {0}")]
    ContractViolation(String),

    #[error("tree depth {depth} is too shallow, need at least {required}")]
    Depth { depth: u32, required: u32 },

    #[error("optimisation failed: {message}")]
    Optimization {
        message: String,
        best: Option<Box<crate::optimize::OptimizationResult>>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn hypothesis(msg: impl Into<String>) -> Self {
        Error::Hypothesis {
            message: msg.into(),
            trace: None,
        }
    }
}
