//! Operation-level relevance propagation over recorded computation graphs.
//!
//! A forward pass is recorded with [`graph::GraphRecorder`], which keeps only
//! what a reverse-mode autodiff tape would keep per op. [`engine::Engine`]
//! then propagates relevance from the output back to the inputs, one rule per
//! op kind ([`rules`]). Ops whose rule needs values that were never cached
//! defer their work through the promise system ([`promise`]) until the
//! values are recovered from the nearest node that has them.
//!
//! The crate is `no_std` with `alloc`.

#![no_std]
extern crate alloc;

pub mod engine;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod metrics;
pub mod op;
pub mod promise;
pub mod rules;
pub mod tensor;
pub mod zoo;

pub use engine::{
    init_relevance, oracle_propagate, oracle_propagate_all, propagate, Engine, EngineOptions, InitMode, PathCache,
    PromiseStats, Run,
};
pub use error::{LrpError, Result};
pub use graph::{build_aux_graph, Edge, Graph, GraphExport, GraphRecorder, NodeId, RecordedGraph};
pub use op::{OpAttrs, OpKind};
pub use promise::{classify_promise_generating, Event, PromiseClass};
pub use rules::{RuleConfig, SoftmaxMode};
pub use tensor::{DType, Tensor};
pub use zoo::ModelSpec;
