use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::NodeId;

pub type Result<T, E = LrpError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LrpError {
    #[error("shape mismatch in {op}: {shapes:?}")]
    ShapeMismatch { op: String, shapes: Vec<Vec<usize>> },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid attribute for {op}: {reason}")]
    InvalidAttr { op: String, reason: String },

    #[error("{op} received a non-finite input")]
    NonFinite { op: String },

    #[error("unsupported op kind `{kind}`")]
    UnsupportedKind { kind: String },

    #[error("node {node} has unsupported kind `{kind}`")]
    UnsupportedNode { node: NodeId, kind: String },

    #[error("{kind} expects {expected} inputs, got {got}")]
    Arity {
        kind: String,
        expected: usize,
        got: usize,
    },

    #[error("input id {0} does not exist in the graph")]
    DanglingInput(NodeId),

    #[error("cycle detected at node {0}")]
    Cycle(NodeId),

    #[error("node {node} ({kind}) is not an Arg Node")]
    NotArgNode { node: NodeId, kind: String },

    #[error("node {node} is missing the value `{what}` needed by its rule")]
    MissingValue { node: NodeId, what: String },

    #[error("branch {0} already has its argument")]
    DoubleResolution(usize),

    #[error("promise {0} completed before it was ready")]
    PromiseNotReady(usize),

    #[error("pre-promise {0} promoted twice")]
    DoublePromotion(usize),

    #[error("index {index} out of range for extent {extent}")]
    IndexOutOfRange { index: usize, extent: usize },

    #[error("traversal ended with stalled nodes {stalled:?}")]
    Deadlock { stalled: Vec<NodeId> },

    #[error("traversal ended with unfinished nodes {pending:?}")]
    Unfinished { pending: Vec<NodeId> },

    #[error("{steps} steps of {per_step} features exceed {features} features")]
    StepOverflow {
        steps: usize,
        per_step: usize,
        features: usize,
    },

    #[error("perturbation curves have different x grids")]
    CurveMismatch,
}

impl LrpError {
    pub(crate) fn shape(op: &str, shapes: &[&[usize]]) -> Self {
        LrpError::ShapeMismatch {
            op: op.into(),
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        }
    }

    pub(crate) fn attr(op: &str, reason: &str) -> Self {
        LrpError::InvalidAttr {
            op: op.into(),
            reason: reason.into(),
        }
    }
}
