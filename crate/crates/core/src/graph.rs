//! Forward-pass recording.
//!
//! A [`GraphRecorder`] evaluates ops eagerly and appends one [`NodeRecord`]
//! per op. Each record keeps only the tensors a reverse-mode autodiff tape
//! would keep for that op (see [`caching_policy`]); an Add node, for example,
//! stores nothing at all. The complete set of every node's inputs and outputs
//! is kept on the side in a [`Shadow`], which the relevance engine never sees
//! and the full-cache oracle uses as ground truth.
//!
//! Edge direction follows the backward traversal: a node's `out_edges` point
//! at the producers of its forward arguments, in argument order.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{LrpError, Result};
use crate::kernels::{self, forward_eval};
use crate::op::{OpAttrs, OpKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    /// Edge to output `slot` of this node.
    pub fn out(self, slot: usize) -> Edge {
        Edge { node: self, slot }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Reference to one output of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub node: NodeId,
    pub slot: usize,
}

impl From<NodeId> for Edge {
    fn from(node: NodeId) -> Self {
        Edge { node, slot: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtxKey {
    Value,
    SignMask,
    Lhs,
    Rhs,
    Input,
    Weight,
    Bias,
    Indices,
    Output,
    Gamma,
    Beta,
    Mean,
    Rstd,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Saved {
    Tensor(Tensor),
    Mask(Vec<bool>),
    Indices(Vec<usize>),
    Stats(Vec<f64>),
}

impl Saved {
    fn byte_size(&self) -> usize {
        match self {
            Saved::Tensor(t) => t.numel() * core::mem::size_of::<f64>(),
            Saved::Mask(m) => m.len(),
            Saved::Indices(i) => i.len() * core::mem::size_of::<usize>(),
            Saved::Stats(s) => s.len() * core::mem::size_of::<f64>(),
        }
    }
}

/// Tensors saved by a node during the forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Context {
    entries: Vec<(CtxKey, Saved)>,
}

impl Context {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = CtxKey> + '_ {
        self.entries.iter().map(|(k, _)| *k)
    }

    pub fn get(&self, key: CtxKey) -> Option<&Saved> {
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    pub fn tensor(&self, key: CtxKey) -> Option<&Tensor> {
        match self.get(key) {
            Some(Saved::Tensor(t)) => Some(t),
            _ => None,
        }
    }

    pub fn byte_size(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.byte_size()).sum()
    }

    fn put(&mut self, key: CtxKey, value: Saved) {
        self.entries.push((key, value));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub kind: OpKind,
    pub attrs: OpAttrs,
    pub ctx: Context,
    /// Producers of the forward arguments, in argument order.
    pub out_edges: Vec<Edge>,
    pub input_shapes: Vec<Vec<usize>>,
    pub output_shapes: Vec<Vec<usize>>,
    /// Which forward arguments come straight from a Parameter terminal.
    pub input_is_param: Vec<bool>,
}

impl NodeRecord {
    pub fn num_outputs(&self) -> usize {
        self.output_shapes.len()
    }
}

/// Context keys a node of `kind` saves during the forward pass.
pub fn caching_policy(kind: &OpKind) -> Result<&'static [CtxKey]> {
    use CtxKey::*;
    Ok(match kind {
        OpKind::Input | OpKind::Parameter => &[Value],
        OpKind::Add
        | OpKind::Sub
        | OpKind::Neg
        | OpKind::Sum
        | OpKind::Mean
        | OpKind::Cat
        | OpKind::Stack
        | OpKind::Unbind
        | OpKind::Split
        | OpKind::View
        | OpKind::Reshape
        | OpKind::Transpose
        | OpKind::Permute
        | OpKind::Expand
        | OpKind::Slice
        | OpKind::MaskedFill => &[],
        OpKind::Relu => &[SignMask],
        OpKind::Mul | OpKind::Div | OpKind::MatMul | OpKind::Bmm => &[Lhs, Rhs],
        OpKind::Linear | OpKind::Conv2d => &[Input, Weight, Bias],
        OpKind::MaxPool2d => &[Input, Indices],
        OpKind::Gelu | OpKind::Silu => &[Input],
        OpKind::Softmax => &[Output],
        OpKind::LayerNorm => &[Input, Gamma, Beta, Mean, Rstd],
        OpKind::Opaque(name) => return Err(LrpError::UnsupportedKind { kind: name.clone() }),
    })
}

/// Whether the node's forward output can be read or recomputed from its own context.
pub fn is_arg_node(node: &NodeRecord) -> bool {
    matches!(
        node.kind,
        OpKind::Input
            | OpKind::Parameter
            | OpKind::Mul
            | OpKind::Div
            | OpKind::MatMul
            | OpKind::Bmm
            | OpKind::Linear
            | OpKind::Conv2d
            | OpKind::MaxPool2d
            | OpKind::Gelu
            | OpKind::Silu
            | OpKind::Softmax
            | OpKind::LayerNorm
            | OpKind::Opaque(_)
    )
}

fn ctx_tensor<'a>(node: &'a NodeRecord, key: CtxKey) -> Result<&'a Tensor> {
    node.ctx.tensor(key).ok_or(LrpError::MissingValue {
        node: node.id,
        what: ctx_key_name(key),
    })
}

fn ctx_key_name(key: CtxKey) -> String {
    alloc::format!("{key:?}")
}

/// Forward arguments reconstructed from an Arg Node's context, when the
/// context holds them. Softmax and Opaque nodes keep only their output.
pub fn ctx_inputs(node: &NodeRecord) -> Result<Option<Vec<Tensor>>> {
    use CtxKey::*;
    let keys: &[CtxKey] = match node.kind {
        OpKind::Mul | OpKind::Div | OpKind::MatMul | OpKind::Bmm => &[Lhs, Rhs],
        OpKind::Linear | OpKind::Conv2d => &[Input, Weight],
        OpKind::MaxPool2d | OpKind::Gelu | OpKind::Silu => &[Input],
        OpKind::LayerNorm => &[Input, Gamma, Beta],
        _ => return Ok(None),
    };
    let mut out = keys
        .iter()
        .map(|&k| ctx_tensor(node, k).cloned())
        .collect::<Result<Vec<_>>>()?;
    if matches!(node.kind, OpKind::Linear | OpKind::Conv2d) {
        if let Some(b) = node.ctx.tensor(Bias) {
            out.push(b.clone());
        }
    }
    Ok(Some(out))
}

/// The forward output of an Arg Node, read from or recomputed out of its context.
pub fn retrieve_fwd_output(node: &NodeRecord) -> Result<Vec<Tensor>> {
    if !is_arg_node(node) {
        return Err(LrpError::NotArgNode {
            node: node.id,
            kind: node.kind.name().into(),
        });
    }
    match &node.kind {
        OpKind::Input | OpKind::Parameter => Ok(vec![ctx_tensor(node, CtxKey::Value)?.clone()]),
        OpKind::Softmax | OpKind::Opaque(_) => Ok(vec![ctx_tensor(node, CtxKey::Output)?.clone()]),
        OpKind::MaxPool2d => {
            let x = ctx_tensor(node, CtxKey::Input)?;
            let idx = match node.ctx.get(CtxKey::Indices) {
                Some(Saved::Indices(i)) => i,
                _ => {
                    return Err(LrpError::MissingValue {
                        node: node.id,
                        what: "Indices".into(),
                    })
                }
            };
            let data = idx.iter().map(|&i| x.data()[i]).collect();
            Ok(vec![x.like(node.output_shapes[0].clone(), data)])
        }
        kind => {
            let inputs = ctx_inputs(node)?.unwrap_or_default();
            let refs: Vec<&Tensor> = inputs.iter().collect();
            forward_eval(kind, &refs, &node.attrs)
        }
    }
}

/// Every node's forward inputs and outputs, indexed by node id.
#[derive(Debug, Clone, Default)]
pub struct Shadow {
    pub inputs: Vec<Vec<Tensor>>,
    pub outputs: Vec<Vec<Tensor>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<NodeRecord>,
    root: NodeId,
}

impl Graph {
    pub fn node(&self, id: NodeId) -> &NodeRecord {
        &self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(id.0)
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input terminals in recording order.
    pub fn inputs(&self) -> Vec<NodeId> {
        self.terminals(OpKind::Input)
    }

    pub fn parameters(&self) -> Vec<NodeId> {
        self.terminals(OpKind::Parameter)
    }

    fn terminals(&self, kind: OpKind) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.kind == kind).map(|n| n.id).collect()
    }

    /// Order-sensitive FNV-1a hash of kinds, edges, shapes and attributes.
    pub fn topology_hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        self.root.hash(&mut h);
        for n in &self.nodes {
            n.kind.name().hash(&mut h);
            n.out_edges.hash(&mut h);
            n.input_shapes.hash(&mut h);
            n.output_shapes.hash(&mut h);
            n.attrs.axis.hash(&mut h);
            n.attrs.axes.hash(&mut h);
            n.attrs.shape.hash(&mut h);
            n.attrs.split_sizes.hash(&mut h);
            n.attrs.mask.hash(&mut h);
        }
        h.finish()
    }

    /// Nodes from which no Arg Node is reachable. Always empty for recorded graphs.
    pub fn nodes_without_arg_descendant(&self) -> Vec<NodeId> {
        // Producers always precede consumers, so one pass in id order suffices.
        let mut reaches = vec![false; self.nodes.len()];
        for n in &self.nodes {
            reaches[n.id.0] = is_arg_node(n) || n.out_edges.iter().any(|e| reaches[e.node.0]);
        }
        self.nodes.iter().filter(|n| !reaches[n.id.0]).map(|n| n.id).collect()
    }

    pub fn to_export(&self, shadow: Option<&Shadow>) -> GraphExport {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let value = match (&n.kind, shadow) {
                    (OpKind::Input | OpKind::Parameter, _) => n.ctx.tensor(CtxKey::Value).cloned(),
                    (OpKind::Opaque(_), _) => n.ctx.tensor(CtxKey::Output).cloned(),
                    _ => None,
                };
                NodeExport {
                    id: n.id,
                    kind: n.kind.clone(),
                    attrs: n.attrs.clone(),
                    out_edges: n.out_edges.clone(),
                    ctx_present: !n.ctx.is_empty(),
                    output_shapes: n.output_shapes.clone(),
                    value,
                }
            })
            .collect();
        GraphExport {
            nodes,
            root: self.root,
        }
    }
}

/// Serializable graph description. Terminal and opaque nodes carry their
/// values so the forward pass can be replayed on import.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<NodeExport>,
    pub root: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeExport {
    pub id: NodeId,
    pub kind: OpKind,
    #[serde(default)]
    pub attrs: OpAttrs,
    #[serde(default)]
    pub out_edges: Vec<Edge>,
    pub ctx_present: bool,
    pub output_shapes: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Tensor>,
}

impl GraphExport {
    /// Kind names per node, without replaying anything. Works for graphs
    /// whose forward pass cannot be re-run.
    pub fn kinds(&self) -> Vec<OpKind> {
        self.nodes.iter().map(|n| n.kind.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RecordedGraph {
    pub graph: Graph,
    pub shadow: Shadow,
}

impl RecordedGraph {
    /// Rebuilds a graph by replaying the forward pass from exported terminal
    /// values. Node ids must be dense and in recording order.
    pub fn from_export(export: &GraphExport) -> Result<Self> {
        let mut rec = GraphRecorder::new();
        for (i, n) in export.nodes.iter().enumerate() {
            if n.id.0 != i {
                return Err(LrpError::InvalidTensor(alloc::format!(
                    "node ids must be dense, found {} at position {i}",
                    n.id
                )));
            }
            let need_value = || {
                n.value.clone().ok_or(LrpError::MissingValue {
                    node: n.id,
                    what: "value".into(),
                })
            };
            match &n.kind {
                OpKind::Input => {
                    rec.input(need_value()?);
                }
                OpKind::Parameter => {
                    rec.parameter(need_value()?);
                }
                OpKind::Opaque(name) => {
                    rec.record_opaque(name, &n.out_edges, need_value()?)?;
                }
                kind => {
                    rec.record_op(kind.clone(), &n.out_edges, n.attrs.clone())?;
                }
            }
        }
        rec.finish(export.root)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GraphRecorder {
    nodes: Vec<NodeRecord>,
    shadow: Shadow,
}

impl GraphRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.terminal(OpKind::Input, value)
    }

    pub fn parameter(&mut self, value: Tensor) -> NodeId {
        self.terminal(OpKind::Parameter, value)
    }

    fn terminal(&mut self, kind: OpKind, value: Tensor) -> NodeId {
        let mut ctx = Context::default();
        ctx.put(CtxKey::Value, Saved::Tensor(value.clone()));
        self.push(kind, OpAttrs::none(), ctx, Vec::new(), Vec::new(), vec![value])
    }

    /// Output `slot` of an already recorded node.
    pub fn value(&self, edge: impl Into<Edge>) -> Result<&Tensor> {
        let e = edge.into();
        self.shadow
            .outputs
            .get(e.node.0)
            .and_then(|o| o.get(e.slot))
            .ok_or(LrpError::DanglingInput(e.node))
    }

    fn gather(&self, inputs: &[Edge]) -> Result<Vec<Tensor>> {
        inputs.iter().map(|&e| self.value(e).cloned()).collect()
    }

    /// Evaluates `kind` on the given outputs and appends the node.
    pub fn record_op(&mut self, kind: OpKind, inputs: &[Edge], attrs: OpAttrs) -> Result<NodeId> {
        if kind.is_terminal() {
            return Err(LrpError::attr(kind.name(), "terminals are created with input() or parameter()"));
        }
        let values = self.gather(inputs)?;
        let refs: Vec<&Tensor> = values.iter().collect();
        let outputs = forward_eval(&kind, &refs, &attrs)?;
        let ctx = self.build_ctx(&kind, &values, &outputs, &attrs)?;
        Ok(self.push(kind, attrs, ctx, inputs.to_vec(), values, outputs))
    }

    /// Convenience for single-output producers.
    pub fn op(&mut self, kind: OpKind, inputs: &[NodeId], attrs: OpAttrs) -> Result<NodeId> {
        let edges: Vec<Edge> = inputs.iter().map(|&n| n.into()).collect();
        self.record_op(kind, &edges, attrs)
    }

    /// Splices in an externally computed value as a node of unknown kind.
    pub fn record_opaque(&mut self, name: &str, inputs: &[Edge], output: Tensor) -> Result<NodeId> {
        let values = self.gather(inputs)?;
        let mut ctx = Context::default();
        ctx.put(CtxKey::Output, Saved::Tensor(output.clone()));
        Ok(self.push(
            OpKind::Opaque(name.to_string()),
            OpAttrs::none(),
            ctx,
            inputs.to_vec(),
            values,
            vec![output],
        ))
    }

    fn build_ctx(&self, kind: &OpKind, inputs: &[Tensor], outputs: &[Tensor], attrs: &OpAttrs) -> Result<Context> {
        let mut ctx = Context::default();
        for &key in caching_policy(kind)? {
            let saved = match key {
                CtxKey::Value => unreachable!("terminals are recorded separately"),
                CtxKey::SignMask => Saved::Mask(inputs[0].data().iter().map(|&v| v > 0.0).collect()),
                CtxKey::Lhs | CtxKey::Input => Saved::Tensor(inputs[0].clone()),
                CtxKey::Rhs | CtxKey::Weight | CtxKey::Gamma => Saved::Tensor(inputs[1].clone()),
                CtxKey::Bias | CtxKey::Beta => match inputs.get(2) {
                    Some(t) => Saved::Tensor(t.clone()),
                    None => continue,
                },
                CtxKey::Indices => Saved::Indices(kernels::maxpool2d_forward(&inputs[0], attrs)?.1),
                CtxKey::Output => Saved::Tensor(outputs[0].clone()),
                CtxKey::Mean | CtxKey::Rstd => {
                    let eps = attrs.epsilon.unwrap_or(1e-5);
                    let (_, mean, rstd) = kernels::layer_norm_forward(&inputs[0], &inputs[1], &inputs[2], eps)?;
                    Saved::Stats(if key == CtxKey::Mean { mean } else { rstd })
                }
            };
            ctx.put(key, saved);
        }
        Ok(ctx)
    }

    fn push(
        &mut self,
        kind: OpKind,
        attrs: OpAttrs,
        ctx: Context,
        out_edges: Vec<Edge>,
        inputs: Vec<Tensor>,
        outputs: Vec<Tensor>,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        let input_is_param = out_edges
            .iter()
            .map(|e| self.nodes[e.node.0].kind == OpKind::Parameter)
            .collect();
        self.nodes.push(NodeRecord {
            id,
            kind,
            attrs,
            ctx,
            out_edges,
            input_shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
            output_shapes: outputs.iter().map(|t| t.shape().to_vec()).collect(),
            input_is_param,
        });
        self.shadow.inputs.push(inputs);
        self.shadow.outputs.push(outputs);
        id
    }

    pub fn finish(self, root: NodeId) -> Result<RecordedGraph> {
        if root.0 >= self.nodes.len() {
            return Err(LrpError::DanglingInput(root));
        }
        Ok(RecordedGraph {
            graph: Graph {
                nodes: self.nodes,
                root,
            },
            shadow: self.shadow,
        })
    }
}

/// Auxiliary traversal structures over the nodes reachable from the root.
///
/// `in_adj[v]` lists `(consumer, argument index)` pairs, one per edge, in the
/// order the depth-first construction appended them. That order is the
/// canonical order for summing relevance contributions at `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxGraph {
    pub root: NodeId,
    pub in_adj: Vec<Vec<(NodeId, usize)>>,
    pub out_adj: Vec<Vec<NodeId>>,
    /// Post-order: popping from the end yields the root first.
    pub topo_stack: Vec<NodeId>,
    pub indegree: Vec<usize>,
    pub reachable: Vec<bool>,
    /// `in_pos[consumer][arg]`: position of that edge in the producer's `in_adj`.
    pub in_pos: Vec<Vec<usize>>,
}

impl AuxGraph {
    pub fn num_reachable(&self) -> usize {
        self.topo_stack.len()
    }

    pub fn num_edges(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    /// Whether `order` lists every reachable node with consumers before producers.
    pub fn is_backward_order(&self, order: &[NodeId]) -> bool {
        let mut seen = vec![false; self.reachable.len()];
        for &v in order {
            if self.in_adj[v.0].iter().any(|(c, _)| !seen[c.0]) {
                return false;
            }
            seen[v.0] = true;
        }
        order.len() == self.num_reachable()
    }
}

/// Depth-first construction from `root`, appending adjacency for every edge.
pub fn build_aux_graph(graph: &Graph, root: NodeId) -> Result<AuxGraph> {
    let n = graph.len();
    if root.0 >= n {
        return Err(LrpError::DanglingInput(root));
    }
    let mut in_adj: Vec<Vec<(NodeId, usize)>> = vec![Vec::new(); n];
    let mut out_adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut in_pos: Vec<Vec<usize>> = graph.nodes().iter().map(|r| vec![0; r.out_edges.len()]).collect();
    let mut topo_stack = Vec::new();
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; n];
    let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
    mark[root.0] = Mark::Open;
    while let Some(&mut (v, ref mut next)) = stack.last_mut() {
        let edges = &graph.node(v).out_edges;
        if *next == edges.len() {
            mark[v.0] = Mark::Done;
            topo_stack.push(v);
            stack.pop();
            continue;
        }
        let arg = *next;
        *next += 1;
        let child = edges[arg].node;
        if child.0 >= n {
            return Err(LrpError::DanglingInput(child));
        }
        out_adj[v.0].push(child);
        in_pos[v.0][arg] = in_adj[child.0].len();
        in_adj[child.0].push((v, arg));
        match mark[child.0] {
            Mark::New => {
                mark[child.0] = Mark::Open;
                stack.push((child, 0));
            }
            Mark::Open => return Err(LrpError::Cycle(child)),
            Mark::Done => {}
        }
    }
    let indegree = in_adj.iter().map(Vec::len).collect();
    let reachable = mark.iter().map(|m| *m == Mark::Done).collect();
    Ok(AuxGraph {
        root,
        in_adj,
        out_adj,
        topo_stack,
        indegree,
        reachable,
        in_pos,
    })
}

/// 64-bit FNV-1a; `core` has no default hasher.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv1a {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Node counts per kind name.
pub fn kind_histogram(graph: &Graph) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for n in graph.nodes() {
        *h.entry(n.kind.name().to_string()).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Tensor {
        Tensor::from_vec(data.to_vec())
    }

    #[test]
    fn add_caches_nothing() {
        let mut r = GraphRecorder::new();
        let a = r.input(v(&[1.0, 2.0]));
        let b = r.input(v(&[3.0, 4.0]));
        let c = r.op(OpKind::Add, &[a, b], OpAttrs::none()).unwrap();
        let g = r.finish(c).unwrap().graph;
        assert!(g.node(c).ctx.is_empty());
        assert_eq!(g.node(c).ctx.byte_size(), 0);
        assert!(!is_arg_node(g.node(c)));
    }

    #[test]
    fn matmul_caches_operands_and_recomputes() {
        let mut r = GraphRecorder::new();
        let x = r.input(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let w = r.parameter(Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap());
        let m = r.op(OpKind::MatMul, &[x, w], OpAttrs::none()).unwrap();
        let rg = r.finish(m).unwrap();
        let node = rg.graph.node(m);
        assert_eq!(node.ctx.keys().collect::<Vec<_>>(), vec![CtxKey::Lhs, CtxKey::Rhs]);
        let out = retrieve_fwd_output(node).unwrap();
        assert_eq!(out[0], rg.shadow.outputs[m.0][0]);
    }

    #[test]
    fn relu_caches_mask_only() {
        let mut r = GraphRecorder::new();
        let x = r.input(v(&[-1.0, 2.0]));
        let y = r.op(OpKind::Relu, &[x], OpAttrs::none()).unwrap();
        let g = r.finish(y).unwrap().graph;
        assert_eq!(g.node(y).ctx.get(CtxKey::SignMask), Some(&Saved::Mask(vec![false, true])));
        assert!(retrieve_fwd_output(g.node(y)).is_err());
    }

    #[test]
    fn dangling_input_rejected() {
        let mut r = GraphRecorder::new();
        let a = r.input(v(&[1.0]));
        let err = r.op(OpKind::Add, &[a, NodeId(7)], OpAttrs::none()).unwrap_err();
        assert_eq!(err, LrpError::DanglingInput(NodeId(7)));
    }

    #[test]
    fn diamond_indegree() {
        let mut r = GraphRecorder::new();
        let a = r.input(v(&[1.0]));
        let b = r.op(OpKind::Neg, &[a], OpAttrs::none()).unwrap();
        let c = r.op(OpKind::Relu, &[a], OpAttrs::none()).unwrap();
        let d = r.op(OpKind::Add, &[b, c], OpAttrs::none()).unwrap();
        let g = r.finish(d).unwrap().graph;
        let aux = build_aux_graph(&g, d).unwrap();
        assert_eq!(aux.indegree[a.0], 2);
        assert_eq!(aux.indegree[d.0], 0);
        assert_eq!(*aux.topo_stack.last().unwrap(), d);
        let order: Vec<NodeId> = aux.topo_stack.iter().rev().copied().collect();
        assert!(aux.is_backward_order(&order));
    }

    #[test]
    fn cycle_detected() {
        let mut r = GraphRecorder::new();
        let a = r.input(v(&[1.0]));
        let b = r.op(OpKind::Neg, &[a], OpAttrs::none()).unwrap();
        let mut g = r.finish(b).unwrap().graph;
        g.nodes[a.0].out_edges.push(b.into());
        assert_eq!(build_aux_graph(&g, b).unwrap_err(), LrpError::Cycle(b));
    }
}
