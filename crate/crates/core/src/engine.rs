//! Relevance propagation over a recorded graph.
//!
//! [`Engine::run`] walks the graph from the root with a LIFO stack of ready
//! nodes. A node is ready once every consumer has landed its relevance on
//! it. Relevance lands either as a tensor or as a promise branch; see
//! [`crate::promise`] for what happens to branches. Arg Nodes whose promise
//! is not complete yet wait in a FIFO stall queue and continue as soon as
//! their branch has been delivered.
//!
//! [`oracle_propagate`] is the reference: a plain reverse topological sweep
//! that reads every forward value from the recording's [`Shadow`].

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{LrpError, Result};
use crate::graph::{build_aux_graph, ctx_inputs, is_arg_node, retrieve_fwd_output, AuxGraph, Fnv1a, Graph, NodeId, NodeRecord, Shadow};
use crate::op::OpKind;
use crate::promise::{
    classify_promise_generating, opens_promise, step_closures, BranchId, Event, Feed, PromiseClass, PromiseId,
    PromiseRole, PromiseSystem, Slots,
};
use crate::rules::{apply_rule, needs_values, RuleConfig};
use crate::tensor::Tensor;

/// How the root's relevance is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// The target logit's own value.
    #[default]
    TargetLogitValue,
    /// A unit at the target position.
    OneHotUnit,
}

/// Zeros shaped like `output`, except at flat index `target`.
pub fn init_relevance(output: &Tensor, target: usize, mode: InitMode) -> Result<Tensor> {
    if target >= output.numel() {
        return Err(LrpError::IndexOutOfRange {
            index: target,
            extent: output.numel(),
        });
    }
    let mut data = vec![0.0; output.numel()];
    data[target] = match mode {
        InitMode::TargetLogitValue => output.data()[target],
        InitMode::OneHotUnit => 1.0,
    };
    Tensor::new(output.shape().to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub rules: RuleConfig,
    /// Treat unsupported nodes as identity on their first argument instead
    /// of failing.
    pub lenient: bool,
    pub record_events: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            rules: RuleConfig::default(),
            lenient: false,
            record_events: true,
        }
    }
}

impl EngineOptions {
    pub fn new(rules: RuleConfig) -> Self {
        EngineOptions {
            rules,
            ..Self::default()
        }
    }
}

/// Promise counters for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromiseStats {
    /// Op promises opened.
    pub num_promises: usize,
    /// Nodes passed through by any branch, aggregation branches included.
    pub internal_nodes: usize,
    /// Sum over op promises of their longest branch.
    pub delta: usize,
    /// `num_promises / total_nodes`.
    pub rho: f64,
    pub total_nodes: usize,
    pub edges: usize,
    /// Reachable nodes of a promise-generating kind.
    pub promise_generating_nodes: usize,
    pub max_live_promises: usize,
    pub pre_promises: usize,
    pub visits: usize,
    pub cache_hit: bool,
}

/// Internal nodes of one branch, recorded for replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedChain {
    pub origin: NodeId,
    /// Branch index of an op promise; `None` for the aggregation at `origin`.
    pub branch: Option<usize>,
    pub internal: Vec<NodeId>,
}

/// Branch chains of a finished run, keyed by graph topology and the rule
/// settings that decide which nodes open promises. Chains are kept sorted by
/// origin, aggregation chains before op branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCache {
    pub key: u64,
    pub chains: Vec<CachedChain>,
}

impl PathCache {
    pub fn key_for(graph: &Graph, cfg: &RuleConfig) -> u64 {
        let mut h = Fnv1a::default();
        graph.topology_hash().hash(&mut h);
        (cfg.softmax_mode as u8).hash(&mut h);
        h.finish()
    }

    pub fn matches(&self, graph: &Graph, cfg: &RuleConfig) -> bool {
        self.key == Self::key_for(graph, cfg)
    }

    fn is_sorted(&self) -> bool {
        self.chains.windows(2).all(|w| chain_order(&w[0]) < chain_order(&w[1]))
    }

    fn sort(&mut self) {
        self.chains.sort_by_key(chain_order);
    }

    /// Internal nodes cached for branch `branch` of the promise at `origin`
    /// (`None` for the aggregation there).
    fn chain(&self, origin: NodeId, branch: Option<usize>) -> Option<&[NodeId]> {
        self.chains
            .binary_search_by_key(&(origin, branch), chain_order)
            .ok()
            .map(|i| self.chains[i].internal.as_slice())
            .filter(|c| !c.is_empty())
    }
}

fn chain_order(c: &CachedChain) -> (NodeId, Option<usize>) {
    (c.origin, c.branch)
}

/// Outcome of one propagation.
#[derive(Debug, Clone)]
pub struct Run {
    /// Relevance at every reached Input and Parameter terminal.
    pub terminals: BTreeMap<NodeId, Tensor>,
    pub stats: PromiseStats,
    pub events: Vec<Event>,
    /// Times each node's relevance rule ran, indexed by node id.
    pub propagations: Vec<u32>,
    /// Internal node sets of all branches, in creation order.
    pub chains: Vec<Vec<NodeId>>,
    pub warnings: Vec<String>,
    /// False when an unsupported node was bridged in lenient mode.
    pub conservative: bool,
    pub cache: PathCache,
}

impl Run {
    pub fn relevance(&self, node: NodeId) -> Option<&Tensor> {
        self.terminals.get(&node)
    }

    /// Sum of relevance over terminals of `kind`.
    pub fn terminal_total(&self, graph: &Graph, kind: OpKind) -> f64 {
        self.terminals
            .iter()
            .filter(|(id, _)| graph.node(**id).kind == kind)
            .map(|(_, t)| t.sum())
            .sum()
    }

    /// Whether no node shows up in two branch chains.
    pub fn chains_disjoint(&self) -> bool {
        let mut seen = BTreeMap::new();
        self.chains.iter().flatten().all(|n| seen.insert(*n, ()).is_none())
    }
}

#[derive(Debug, Clone, Copy)]
enum Dispatch {
    /// Every input landed as a tensor.
    Concrete(NodeId),
    WithBranch { node: NodeId, branch: BranchId, reach_ahead: bool },
}

#[derive(Debug, Clone)]
enum Landed {
    Tensor(Tensor),
    Branch,
}

pub struct Engine<'g> {
    graph: &'g Graph,
    aux: AuxGraph,
    opts: EngineOptions,
    /// [`PathCache::key_for`] of this graph and rule set.
    cache_key: u64,
}

impl<'g> Engine<'g> {
    pub fn new(graph: &'g Graph, opts: EngineOptions) -> Result<Self> {
        opts.rules.validate()?;
        let aux = build_aux_graph(graph, graph.root())?;
        let cache_key = PathCache::key_for(graph, &opts.rules);
        Ok(Engine {
            graph,
            aux,
            opts,
            cache_key,
        })
    }

    pub fn aux(&self) -> &AuxGraph {
        &self.aux
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    /// Propagates `r_init` from the root. A cache whose key does not match
    /// the graph is ignored.
    pub fn run(&self, r_init: &Tensor, cache: Option<&PathCache>) -> Result<Run> {
        let root = self.graph.node(self.graph.root());
        if r_init.shape() != root.output_shapes[0].as_slice() {
            return Err(LrpError::shape("init relevance", &[r_init.shape(), &root.output_shapes[0]]));
        }
        let sorted;
        let cache = match cache.filter(|c| c.key == self.cache_key) {
            Some(c) if !c.is_sorted() => {
                let mut owned = c.clone();
                owned.sort();
                sorted = owned;
                Some(&sorted)
            }
            other => other,
        };
        let mut t = Traversal::new(self, cache);
        t.run(r_init)?;
        t.finish()
    }
}

/// `propagate` with defaults: returns the relevance at `target`.
pub fn propagate(graph: &Graph, rules: RuleConfig, r_init: &Tensor, target: NodeId) -> Result<Tensor> {
    let engine = Engine::new(graph, EngineOptions {
        rules,
        lenient: false,
        record_events: false,
    })?;
    let run = engine.run(r_init, None)?;
    Ok(run
        .terminals
        .get(&target)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(&graph.node(target).output_shapes[0])))
}

struct Traversal<'e, 'g> {
    graph: &'g Graph,
    aux: &'e AuxGraph,
    opts: EngineOptions,
    ps: PromiseSystem<'g>,
    pending: Vec<usize>,
    landed: Vec<Vec<Option<Landed>>>,
    agg: Vec<Option<PromiseId>>,
    stack: Vec<Dispatch>,
    stall: VecDeque<(NodeId, BranchId)>,
    skipped: Vec<bool>,
    terminals: BTreeMap<NodeId, Tensor>,
    root_rel: Option<Tensor>,
    visits: usize,
    warnings: Vec<String>,
    conservative: bool,
    cache: Option<&'e PathCache>,
    cache_key: u64,
}

impl<'e, 'g> Traversal<'e, 'g> {
    fn new(engine: &'e Engine<'g>, cache: Option<&'e PathCache>) -> Self {
        let g = engine.graph;
        Traversal {
            graph: g,
            aux: &engine.aux,
            opts: engine.opts,
            ps: PromiseSystem::new(g, engine.opts.rules, engine.opts.record_events),
            pending: engine.aux.indegree.clone(),
            landed: engine.aux.in_adj.iter().map(|a| vec![None; a.len()]).collect(),
            agg: vec![None; g.len()],
            stack: Vec::new(),
            stall: VecDeque::new(),
            skipped: vec![false; g.len()],
            terminals: BTreeMap::new(),
            root_rel: None,
            visits: 0,
            warnings: Vec::new(),
            conservative: true,
            cache,
            cache_key: engine.cache_key,
        }
    }

    fn node(&self, id: NodeId) -> &'g NodeRecord {
        self.graph.node(id)
    }

    fn run(&mut self, r_init: &Tensor) -> Result<()> {
        let root = self.graph.root();
        self.root_rel = Some(r_init.clone());
        self.stack.push(Dispatch::Concrete(root));
        loop {
            if let Some(i) = self.stall.iter().position(|&(_, b)| self.ps.delivered(b).is_some()) {
                let (node, branch) = self.stall.remove(i).expect("index from position");
                self.ps.log(|| Event::Dequeue { node, branch });
                let rel = self.delivered_slots(node, branch);
                self.dispatch_concrete(node, rel)?;
                continue;
            }
            let Some(d) = self.stack.pop() else { break };
            self.visits += 1;
            match d {
                Dispatch::Concrete(node) => {
                    self.ps.log(|| Event::Visit { node, reach_ahead: false });
                    let rel = self.gather(node)?;
                    self.dispatch_concrete(node, rel)?;
                }
                Dispatch::WithBranch { node, branch, reach_ahead } => {
                    self.ps.log(|| Event::Visit { node, reach_ahead });
                    self.dispatch_branch(node, branch)?;
                }
            }
        }
        Ok(())
    }

    /// Sums landed tensors in in-adjacency order.
    fn gather(&mut self, node: NodeId) -> Result<Slots> {
        let rec = self.node(node);
        if node == self.graph.root() {
            let mut out: Slots = rec.output_shapes.iter().map(|s| Tensor::zeros(s)).collect();
            out[0] = self.root_rel.take().expect("root dispatched once");
            return Ok(out);
        }
        let mut acc: Slots = rec.output_shapes.iter().map(|s| Tensor::zeros(s)).collect();
        for (pos, l) in self.landed[node.0].iter_mut().enumerate() {
            let (consumer, arg) = self.aux.in_adj[node.0][pos];
            let slot = self.graph.node(consumer).out_edges[arg].slot;
            match l.take() {
                Some(Landed::Tensor(t)) => acc[slot] = acc[slot].add(&t)?,
                _ => unreachable!("concrete dispatch with a missing or branch input"),
            }
        }
        Ok(acc)
    }

    fn delivered_slots(&self, node: NodeId, branch: BranchId) -> Slots {
        let b = &self.ps.branches[branch];
        let d = b.delivered.as_ref().expect("delivered");
        match b.end_slot {
            None => d.clone(),
            Some(s) => self
                .node(node)
                .output_shapes
                .iter()
                .enumerate()
                .map(|(i, sh)| if i == s { d[0].clone() } else { Tensor::zeros(sh) })
                .collect(),
        }
    }

    fn dispatch_concrete(&mut self, v: NodeId, rel: Slots) -> Result<()> {
        let node = self.node(v);
        let cfg = self.opts.rules;
        if node.kind.is_terminal() {
            self.ps.log(|| Event::Terminal { node: v });
            self.ps.count_propagation(v);
            let r = rel.into_iter().next().expect("terminals have one output");
            self.terminals.insert(v, r);
            return Ok(());
        }
        if opens_promise(&node.kind, &cfg, false) {
            let p = self.ps.create_op_promise(v, Feed::Slots(rel));
            return self.spawn_branches(p);
        }
        let rins = match &node.kind {
            OpKind::Opaque(name) => {
                if !self.opts.lenient {
                    return Err(LrpError::UnsupportedNode { node: v, kind: name.clone() });
                }
                self.lenient_bridge(node, &rel[0])
            }
            kind => {
                let inputs = if needs_values(kind, &cfg) {
                    Some(ctx_inputs(node)?.ok_or_else(|| LrpError::MissingValue {
                        node: v,
                        what: "forward arguments".into(),
                    })?)
                } else {
                    None
                };
                apply_rule(node, &cfg, inputs.as_deref(), &rel)?
            }
        };
        self.ps.count_propagation(v);
        for (arg, r) in rins.into_iter().enumerate().rev() {
            self.land_tensor(v, arg, r)?;
        }
        Ok(())
    }

    fn lenient_bridge(&mut self, node: &NodeRecord, r: &Tensor) -> Vec<Tensor> {
        self.warnings.push(alloc::format!(
            "node {} has unsupported kind `{}`; relevance passed through unchanged",
            node.id,
            node.kind
        ));
        self.conservative = false;
        node.input_shapes
            .iter()
            .enumerate()
            .map(|(i, shape)| match (i, r.reshape(shape)) {
                (0, Ok(t)) => t,
                _ => Tensor::zeros(shape),
            })
            .collect()
    }

    fn dispatch_branch(&mut self, v: NodeId, b: BranchId) -> Result<()> {
        let node = self.node(v);
        let cfg = self.opts.rules;
        if is_arg_node(node) {
            let value = retrieve_fwd_output(node)?;
            self.ps.arg_reached(b, v, value)?;
            if self.ps.delivered(b).is_some() {
                let rel = self.delivered_slots(v, b);
                return self.dispatch_concrete(v, rel);
            }
            self.ps.log(|| Event::Stall { node: v, branch: b });
            self.stall.push_back((v, b));
            return Ok(());
        }
        if opens_promise(&node.kind, &cfg, true) {
            let p = self.ps.create_op_promise(v, Feed::Branch(b));
            return self.spawn_branches(p);
        }
        self.step(b, v)?;
        self.land_branch(v, 0, b)
    }

    fn step(&mut self, b: BranchId, v: NodeId) -> Result<()> {
        let node = self.node(v);
        if node.out_edges.len() != 1 || node.num_outputs() != 1 {
            return Err(LrpError::Arity {
                kind: node.kind.name().into(),
                expected: 1,
                got: node.out_edges.len(),
            });
        }
        let (fwd, bwd) = step_closures(node, self.opts.rules);
        self.ps.step(b, v, fwd, bwd);
        Ok(())
    }

    fn spawn_branches(&mut self, p: PromiseId) -> Result<()> {
        let origin = self.ps.promises[p].origin;
        let branches = self.ps.promises[p].branches.clone();
        for (i, &b) in branches.iter().enumerate().rev() {
            match self.cache.and_then(|c| c.chain(origin, Some(i))) {
                Some(chain) => self.replay(b, origin, i, chain)?,
                None => self.land_branch(origin, i, b)?,
            }
        }
        Ok(())
    }

    /// Steps `b` through a cached chain starting at the producer of
    /// `consumer`'s argument `arg`, then lands it at the chain's end.
    fn replay(&mut self, b: BranchId, consumer: NodeId, arg: usize, chain: &[NodeId]) -> Result<()> {
        let mut expect = self.node(consumer).out_edges[arg].node;
        for &u in chain {
            if u != expect {
                return Err(LrpError::DanglingInput(u));
            }
            self.step(b, u)?;
            self.skipped[u.0] = true;
            expect = self.node(u).out_edges[0].node;
        }
        let last = *chain.last().expect("non-empty chain");
        self.land_branch(last, 0, b)
    }

    fn land_tensor(&mut self, consumer: NodeId, arg: usize, r: Tensor) -> Result<()> {
        let edge = self.node(consumer).out_edges[arg];
        let (p, pos) = (edge.node, self.aux.in_pos[consumer.0][arg]);
        self.pending[p.0] -= 1;
        match self.agg[p.0] {
            Some(a) => {
                self.ps.add_feed(a, pos, Feed::Tensor { slot: edge.slot, value: r });
                if self.pending[p.0] == 0 {
                    self.ps.promote(a)?;
                }
            }
            None => {
                self.landed[p.0][pos] = Some(Landed::Tensor(r));
                if self.pending[p.0] == 0 {
                    self.stack.push(Dispatch::Concrete(p));
                }
            }
        }
        Ok(())
    }

    fn land_branch(&mut self, consumer: NodeId, arg: usize, b: BranchId) -> Result<()> {
        let edge = self.node(consumer).out_edges[arg];
        let (p, pos) = (edge.node, self.aux.in_pos[consumer.0][arg]);
        self.ps.branches[b].end_slot = Some(edge.slot);
        self.pending[p.0] -= 1;
        if self.aux.indegree[p.0] == 1 {
            self.stack.push(Dispatch::WithBranch {
                node: p,
                branch: b,
                reach_ahead: false,
            });
            return Ok(());
        }
        match self.agg[p.0] {
            Some(a) => {
                self.ps.join(a, pos, b)?;
                if self.pending[p.0] == 0 {
                    self.ps.promote(a)?;
                }
            }
            None => {
                let a = self.ps.create_aggregation(p, self.aux.indegree[p.0], pos, b);
                self.agg[p.0] = Some(a);
                for (i, l) in self.landed[p.0].iter_mut().enumerate() {
                    if let Some(Landed::Tensor(t)) = l.take() {
                        let (c, carg) = self.aux.in_adj[p.0][i];
                        let slot = self.graph.node(c).out_edges[carg].slot;
                        self.ps.add_feed(a, i, Feed::Tensor { slot, value: t });
                    }
                    *l = Some(Landed::Branch);
                }
                let ab = self.ps.promises[a].branches[0];
                let pending = self.pending[p.0];
                if pending == 0 {
                    self.ps.promote(a)?;
                }
                match self.cache.and_then(|c| c.chain(p, None)) {
                    Some(chain) => {
                        // The chain starts at `p` itself.
                        self.step(ab, p)?;
                        self.skipped[p.0] = true;
                        let rest = &chain[1..];
                        if rest.is_empty() {
                            self.land_branch(p, 0, ab)?;
                        } else {
                            self.replay(ab, p, 0, rest)?;
                        }
                    }
                    _ => self.stack.push(Dispatch::WithBranch {
                        node: p,
                        branch: ab,
                        reach_ahead: pending > 0,
                    }),
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Run> {
        if !self.stall.is_empty() {
            return Err(LrpError::Deadlock {
                stalled: self.stall.iter().map(|(n, _)| *n).collect(),
            });
        }
        let unfinished: Vec<NodeId> = (0..self.graph.len())
            .filter(|&i| self.aux.reachable[i] && !self.skipped[i] && self.pending[i] > 0)
            .map(NodeId)
            .chain(self.ps.promises.iter().filter(|p| !p.complete).map(|p| p.origin))
            .collect();
        if !unfinished.is_empty() {
            return Err(LrpError::Unfinished { pending: unfinished });
        }

        let ps = &self.ps;
        let chains: Vec<Vec<NodeId>> = ps.branches.iter().map(|b| b.internal_nodes().collect()).collect();
        let mut cached = Vec::new();
        let mut delta = 0;
        for p in &ps.promises {
            let lens = p.branches.iter().map(|&b| ps.branches[b].steps.len());
            if p.role == PromiseRole::Op {
                delta += lens.clone().max().unwrap_or(0);
            }
            for (i, &b) in p.branches.iter().enumerate() {
                if !chains[b].is_empty() {
                    cached.push(CachedChain {
                        origin: p.origin,
                        branch: (p.role == PromiseRole::Op).then_some(i),
                        internal: chains[b].clone(),
                    });
                }
            }
        }
        let total_nodes = self.aux.num_reachable();
        let num_promises = ps.num_op_promises();
        let vp = self
            .aux
            .topo_stack
            .iter()
            .filter(|&&v| classify_promise_generating(&self.node(v).kind, &self.opts.rules) != PromiseClass::None)
            .count();
        let stats = PromiseStats {
            num_promises,
            internal_nodes: chains.iter().map(Vec::len).sum(),
            delta,
            rho: num_promises as f64 / total_nodes as f64,
            total_nodes,
            edges: self.aux.num_edges(),
            promise_generating_nodes: vp,
            max_live_promises: ps.max_live,
            pre_promises: ps.promises.len() - num_promises,
            visits: self.visits,
            cache_hit: self.cache.is_some(),
        };
        Ok(Run {
            terminals: self.terminals,
            stats,
            propagations: self.ps.propagations.clone(),
            events: self.ps.events,
            chains,
            warnings: self.warnings,
            conservative: self.conservative,
            cache: {
                let mut c = PathCache {
                    key: self.cache_key,
                    chains: cached,
                };
                c.sort();
                c
            },
        })
    }
}

/// Reference propagation with every forward value available.
pub fn oracle_propagate_all(
    graph: &Graph,
    shadow: &Shadow,
    rules: &RuleConfig,
    r_init: &Tensor,
    lenient: bool,
) -> Result<BTreeMap<NodeId, Tensor>> {
    let aux = build_aux_graph(graph, graph.root())?;
    let mut landed: Vec<Vec<Option<Tensor>>> = aux.in_adj.iter().map(|a| vec![None; a.len()]).collect();
    let mut out = BTreeMap::new();
    for &v in aux.topo_stack.iter().rev() {
        let node = graph.node(v);
        let mut rel: Slots = node.output_shapes.iter().map(|s| Tensor::zeros(s)).collect();
        if v == graph.root() {
            rel[0] = r_init.clone();
        }
        for (pos, t) in landed[v.0].iter_mut().enumerate() {
            let (c, arg) = aux.in_adj[v.0][pos];
            let slot = graph.node(c).out_edges[arg].slot;
            rel[slot] = rel[slot].add(&t.take().expect("consumers precede producers"))?;
        }
        if node.kind.is_terminal() {
            out.insert(v, rel.swap_remove(0));
            continue;
        }
        let rins = match &node.kind {
            OpKind::Opaque(name) if !lenient => {
                return Err(LrpError::UnsupportedNode { node: v, kind: name.clone() });
            }
            OpKind::Opaque(_) => node
                .input_shapes
                .iter()
                .enumerate()
                .map(|(i, shape)| match (i, rel[0].reshape(shape)) {
                    (0, Ok(t)) => t,
                    _ => Tensor::zeros(shape),
                })
                .collect(),
            kind => {
                let values = needs_values(kind, rules).then(|| shadow.inputs[v.0].as_slice());
                apply_rule(node, rules, values, &rel)?
            }
        };
        for (arg, r) in rins.into_iter().enumerate() {
            let p = node.out_edges[arg].node;
            landed[p.0][aux.in_pos[v.0][arg]] = Some(r);
        }
    }
    Ok(out)
}

/// Oracle relevance at `target`.
pub fn oracle_propagate(graph: &Graph, shadow: &Shadow, rules: &RuleConfig, r_init: &Tensor, target: NodeId) -> Result<Tensor> {
    let all = oracle_propagate_all(graph, shadow, rules, r_init, false)?;
    Ok(all
        .get(&target)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(&graph.node(target).output_shapes[0])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_relevance_examples() {
        let out = Tensor::from_vec(vec![2.0, -1.0]);
        assert_eq!(init_relevance(&out, 0, InitMode::TargetLogitValue).unwrap().data(), &[2.0, 0.0]);
        assert_eq!(init_relevance(&out, 0, InitMode::OneHotUnit).unwrap().data(), &[1.0, 0.0]);
        let zero = Tensor::zeros(&[2]);
        assert_eq!(init_relevance(&zero, 1, InitMode::TargetLogitValue).unwrap().data(), &[0.0, 0.0]);
        assert!(init_relevance(&zero, 2, InitMode::OneHotUnit).is_err());
    }
}
