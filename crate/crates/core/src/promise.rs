//! Deferred relevance propagation.
//!
//! A node whose rule needs forward values that its context does not hold
//! (an Add, for instance) cannot propagate when relevance reaches it. It
//! opens a [`Promise`] instead and sends one [`PromiseBranch`] down each
//! forward argument. A branch walks through nodes that cannot give it the
//! value either, recording a forward and a backward closure at each, until
//! it meets an Arg Node. The retrieved activation is then folded back up the
//! forward closures into the promise. Once every branch has delivered its
//! argument and the promise's own relevance is known, the rule runs and each
//! branch's share is folded down its backward closures to the Arg Node.
//!
//! Promises nest. A branch that reaches another promise-generating node
//! becomes the parent of that node's promise; the child pushes its op result
//! up to the parent as an argument and receives its relevance from it.
//!
//! An aggregation promise sits on a node with several consumers once at
//! least one of them sent a branch. It starts as a pre-promise: parents are
//! linked but it is not yet a child of any of them, so it can fetch the
//! node's activation for its parents without waiting for relevance. It is
//! promoted once every consumer has landed, at which point it sums all
//! incoming relevance and continues down its single branch.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{LrpError, Result};
use crate::graph::{Graph, NodeId, NodeRecord};
use crate::kernels::forward_eval;
use crate::op::OpKind;
use crate::rules::{apply_rule, RuleConfig};
use crate::tensor::Tensor;

pub type PromiseId = usize;
pub type BranchId = usize;

/// One tensor per output slot of a node.
pub type Slots = Vec<Tensor>;

pub type StepFn<'g> = Box<dyn Fn(&Tensor) -> Result<Tensor> + 'g>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromiseClass {
    /// Always opens a promise: the rule needs inputs the node never caches.
    Strict,
    /// Opens a promise only when relevance arrives as a branch.
    Dependent,
    None,
}

/// Promise-generating class of `kind` under `cfg`.
pub fn classify_promise_generating(kind: &OpKind, cfg: &RuleConfig) -> PromiseClass {
    match kind {
        OpKind::Add | OpKind::Sub | OpKind::Sum | OpKind::Mean => PromiseClass::Strict,
        OpKind::Softmax if cfg.softmax_mode == crate::rules::SoftmaxMode::Attnlrp => PromiseClass::Strict,
        OpKind::Cat | OpKind::Stack | OpKind::Unbind | OpKind::Split => PromiseClass::Dependent,
        _ => PromiseClass::None,
    }
}

/// Whether a node of `kind` opens a promise given whether any of its
/// relevance inputs is a branch.
pub fn opens_promise(kind: &OpKind, cfg: &RuleConfig, any_branch: bool) -> bool {
    match classify_promise_generating(kind, cfg) {
        PromiseClass::Strict => true,
        PromiseClass::Dependent => any_branch,
        PromiseClass::None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromiseRole {
    Op,
    Aggregation,
}

/// One relevance contribution to a promise.
#[derive(Debug, Clone)]
pub enum Feed {
    /// Concrete relevance for one output slot.
    Tensor { slot: usize, value: Tensor },
    /// Concrete relevance for every output slot.
    Slots(Slots),
    /// Relevance that a parent branch will deliver.
    Branch(BranchId),
}

pub struct Step<'g> {
    pub node: NodeId,
    fwd: StepFn<'g>,
    bwd: StepFn<'g>,
}

impl core::fmt::Debug for Step<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Step({})", self.node)
    }
}

/// Forward and backward closures for passing a branch through `node`,
/// which must have one forward argument and one output.
pub fn step_closures<'g>(node: &'g NodeRecord, cfg: RuleConfig) -> (StepFn<'g>, StepFn<'g>) {
    let fwd: StepFn<'g> = Box::new(move |x: &Tensor| {
        let mut out = forward_eval(&node.kind, &[x], &node.attrs)?;
        Ok(out.swap_remove(0))
    });
    let bwd: StepFn<'g> = Box::new(move |r: &Tensor| {
        let mut out = apply_rule(node, &cfg, None, core::slice::from_ref(r))?;
        Ok(out.swap_remove(0))
    });
    (fwd, bwd)
}

#[derive(Debug)]
pub struct PromiseBranch<'g> {
    pub promise: PromiseId,
    pub index: usize,
    pub steps: Vec<Step<'g>>,
    pub children: Vec<PromiseId>,
    pub arg_node: Option<NodeId>,
    /// Output slot of the node the branch currently ends at. `None` for an
    /// aggregation branch that never left its node: it carries every slot.
    pub end_slot: Option<usize>,
    pub delivered: Option<Slots>,
}

impl PromiseBranch<'_> {
    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.steps.iter().map(|s| s.node)
    }
}

#[derive(Debug)]
pub struct Promise {
    pub id: PromiseId,
    pub origin: NodeId,
    pub kind: OpKind,
    pub role: PromiseRole,
    pub feeds: Vec<Option<Feed>>,
    pub args: Vec<Option<Slots>>,
    pub rins: Vec<Option<Slots>>,
    pub branches: Vec<BranchId>,
    pub ready: bool,
    pub complete: bool,
    pub promoted: bool,
    pushed: Vec<BranchId>,
    result: Option<Slots>,
}

impl Promise {
    pub fn parents(&self) -> impl Iterator<Item = BranchId> + '_ {
        self.feeds.iter().filter_map(|f| match f {
            Some(Feed::Branch(b)) => Some(*b),
            _ => None,
        })
    }
}

/// Engine event, serialized with an `event` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Visit { node: NodeId, reach_ahead: bool },
    PromiseCreated { promise: PromiseId, origin: NodeId, kind: String, branches: usize, parent: Option<BranchId> },
    PrePromiseCreated { promise: PromiseId, node: NodeId, parent: BranchId },
    AggregationJoined { promise: PromiseId, parent: BranchId },
    Promoted { promise: PromiseId, node: NodeId },
    BranchStep { branch: BranchId, node: NodeId },
    ArgReached { branch: BranchId, node: NodeId },
    ForwardChain { branch: BranchId, promise: PromiseId, through: Vec<NodeId> },
    PromiseReady { promise: PromiseId },
    PromiseComplete { promise: PromiseId, origin: NodeId },
    BranchBackward { branch: BranchId, promise: PromiseId, index: usize, through: Vec<NodeId> },
    Stall { node: NodeId, branch: BranchId },
    Dequeue { node: NodeId, branch: BranchId },
    Propagate { node: NodeId },
    Terminal { node: NodeId },
}

enum Work {
    SetArg { branch: BranchId, value: Slots },
    Trigger(PromiseId),
    ExecBranch(BranchId),
}

/// Arena of promises and branches for one run, with the event journal and
/// per-node propagation counters.
pub struct PromiseSystem<'g> {
    graph: &'g Graph,
    cfg: RuleConfig,
    pub promises: Vec<Promise>,
    pub branches: Vec<PromiseBranch<'g>>,
    work: Vec<Work>,
    pub events: Vec<Event>,
    record: bool,
    pub propagations: Vec<u32>,
    live: usize,
    pub max_live: usize,
}

impl<'g> PromiseSystem<'g> {
    pub fn new(graph: &'g Graph, cfg: RuleConfig, record: bool) -> Self {
        PromiseSystem {
            graph,
            cfg,
            promises: Vec::new(),
            branches: Vec::new(),
            work: Vec::new(),
            events: Vec::new(),
            record,
            propagations: vec![0; graph.len()],
            live: 0,
            max_live: 0,
        }
    }

    pub fn log(&mut self, e: impl FnOnce() -> Event) {
        if self.record {
            self.events.push(e());
        }
    }

    pub fn count_propagation(&mut self, node: NodeId) {
        self.propagations[node.0] += 1;
        self.log(|| Event::Propagate { node });
    }

    fn new_promise(&mut self, origin: NodeId, role: PromiseRole, feeds: Vec<Option<Feed>>, arity: usize) -> PromiseId {
        let id = self.promises.len();
        let branches = (0..arity)
            .map(|index| {
                self.branches.push(PromiseBranch {
                    promise: id,
                    index,
                    steps: Vec::new(),
                    children: Vec::new(),
                    arg_node: None,
                    end_slot: None,
                    delivered: None,
                });
                self.branches.len() - 1
            })
            .collect();
        self.promises.push(Promise {
            id,
            origin,
            kind: self.graph.node(origin).kind.clone(),
            role,
            feeds,
            args: vec![None; arity],
            rins: vec![None; arity],
            branches,
            ready: false,
            complete: false,
            promoted: role == PromiseRole::Op,
            pushed: Vec::new(),
            result: None,
        });
        id
    }

    /// Opens a promise at a promise-generating node with one branch per
    /// forward argument. Relevance comes either as a concrete feed or from
    /// `parent`, which gains the new promise as a child.
    pub fn create_op_promise(&mut self, origin: NodeId, feed: Feed) -> PromiseId {
        let arity = self.graph.node(origin).out_edges.len();
        let parent = match feed {
            Feed::Branch(b) => Some(b),
            _ => None,
        };
        let id = self.new_promise(origin, PromiseRole::Op, vec![Some(feed)], arity);
        if let Some(b) = parent {
            self.branches[b].children.push(id);
        }
        self.live += 1;
        self.max_live = self.max_live.max(self.live);
        let kind = self.promises[id].kind.name().into();
        self.log(|| Event::PromiseCreated { promise: id, origin, kind, branches: arity, parent });
        id
    }

    /// Opens an aggregation pre-promise at `node` with `first` as its first
    /// parent at in-adjacency position `pos`.
    pub fn create_aggregation(&mut self, node: NodeId, positions: usize, pos: usize, first: BranchId) -> PromiseId {
        let mut feeds = vec![None; positions];
        feeds[pos] = Some(Feed::Branch(first));
        let id = self.new_promise(node, PromiseRole::Aggregation, feeds, 1);
        self.log(|| Event::PrePromiseCreated { promise: id, node, parent: first });
        id
    }

    /// Adds a concrete feed to an aggregation.
    pub fn add_feed(&mut self, promise: PromiseId, pos: usize, feed: Feed) {
        self.promises[promise].feeds[pos] = Some(feed);
    }

    /// Links another parent branch into an aggregation. A parent arriving
    /// after the activation went up receives it straight away.
    pub fn join(&mut self, promise: PromiseId, pos: usize, parent: BranchId) -> Result<()> {
        let p = &mut self.promises[promise];
        p.feeds[pos] = Some(Feed::Branch(parent));
        if p.promoted {
            self.branches[parent].children.push(promise);
        }
        self.log(|| Event::AggregationJoined { promise, parent });
        if let Some(value) = self.promises[promise].result.clone() {
            self.promises[promise].pushed.push(parent);
            self.work.push(Work::SetArg { branch: parent, value });
        }
        self.run()
    }

    /// Makes an aggregation a child of each parent so relevance can reach it.
    pub fn promote(&mut self, promise: PromiseId) -> Result<()> {
        if self.promises[promise].promoted {
            return Err(LrpError::DoublePromotion(promise));
        }
        self.promises[promise].promoted = true;
        let parents: Vec<BranchId> = self.promises[promise].parents().collect();
        for b in parents {
            self.branches[b].children.push(promise);
        }
        let node = self.promises[promise].origin;
        self.log(|| Event::Promoted { promise, node });
        self.work.push(Work::Trigger(promise));
        self.run()
    }

    /// Extends a branch through one more node.
    pub fn step(&mut self, branch: BranchId, node: NodeId, fwd: StepFn<'g>, bwd: StepFn<'g>) {
        self.branches[branch].steps.push(Step { node, fwd, bwd });
        self.log(|| Event::BranchStep { branch, node });
    }

    /// Hands the activation of the Arg Node `node` to the branch ending there.
    pub fn arg_reached(&mut self, branch: BranchId, node: NodeId, value: Slots) -> Result<()> {
        self.branches[branch].arg_node = Some(node);
        self.log(|| Event::ArgReached { branch, node });
        self.work.push(Work::SetArg { branch, value });
        self.run()
    }

    pub fn delivered(&self, branch: BranchId) -> Option<&Slots> {
        self.branches[branch].delivered.as_ref()
    }

    fn run(&mut self) -> Result<()> {
        while let Some(w) = self.work.pop() {
            match w {
                Work::SetArg { branch, value } => self.set_arg(branch, value)?,
                Work::Trigger(p) => self.trigger(p)?,
                Work::ExecBranch(b) => self.exec_branch(b)?,
            }
        }
        Ok(())
    }

    fn set_arg(&mut self, branch: BranchId, value: Slots) -> Result<()> {
        let b = &self.branches[branch];
        let arg = match b.end_slot {
            Some(s) => {
                let mut t = value.into_iter().nth(s).ok_or(LrpError::IndexOutOfRange {
                    index: s,
                    extent: 0,
                })?;
                for step in b.steps.iter().rev() {
                    t = (step.fwd)(&t)?;
                }
                vec![t]
            }
            None => value,
        };
        let (pid, index) = (b.promise, b.index);
        let through: Vec<NodeId> = b.steps.iter().rev().map(|s| s.node).collect();
        self.log(|| Event::ForwardChain { branch, promise: pid, through });
        let p = &mut self.promises[pid];
        if p.args[index].is_some() {
            return Err(LrpError::DoubleResolution(branch));
        }
        p.args[index] = Some(arg);
        if p.args.iter().all(Option::is_some) {
            p.ready = true;
            self.log(|| Event::PromiseReady { promise: pid });
            self.work.push(Work::Trigger(pid));
        }
        Ok(())
    }

    fn op_result(&self, pid: PromiseId) -> Result<Slots> {
        let p = &self.promises[pid];
        let args: Vec<&Slots> = p.args.iter().map(|a| a.as_ref().expect("ready")).collect();
        match p.role {
            PromiseRole::Aggregation => Ok(args[0].clone()),
            PromiseRole::Op => {
                let node = self.graph.node(p.origin);
                let refs: Vec<&Tensor> = args.iter().map(|a| &a[0]).collect();
                forward_eval(&node.kind, &refs, &node.attrs)
            }
        }
    }

    fn trigger(&mut self, pid: PromiseId) -> Result<()> {
        let p = &self.promises[pid];
        if !p.ready || p.complete {
            return Ok(());
        }
        let waiting: Vec<BranchId> = p.parents().filter(|b| !p.pushed.contains(b)).collect();
        if !waiting.is_empty() {
            let value = match &p.result {
                Some(v) => v.clone(),
                None => {
                    let v = self.op_result(pid)?;
                    self.promises[pid].result = Some(v.clone());
                    v
                }
            };
            for &b in waiting.iter().rev() {
                self.work.push(Work::SetArg { branch: b, value: value.clone() });
            }
            self.promises[pid].pushed.extend(waiting);
            return Ok(());
        }
        let p = &self.promises[pid];
        let fed = p.feeds.iter().all(|f| match f {
            Some(Feed::Branch(b)) => self.branches[*b].delivered.is_some(),
            Some(_) => true,
            None => false,
        });
        if !(fed && p.promoted) {
            return Ok(());
        }
        self.complete(pid)
    }

    /// Relevance at the promise's node, summed over feeds in position order.
    fn rout(&self, pid: PromiseId) -> Slots {
        let p = &self.promises[pid];
        let node = self.graph.node(p.origin);
        let mut acc: Slots = node.output_shapes.iter().map(|s| Tensor::zeros(s)).collect();
        let mut add = |slot: usize, t: &Tensor| {
            let sum = acc[slot].add(t).expect("relevance shaped like its activation");
            acc[slot] = sum;
        };
        for feed in p.feeds.iter().flatten() {
            match feed {
                Feed::Tensor { slot, value } => add(*slot, value),
                Feed::Slots(all) => all.iter().enumerate().for_each(|(s, t)| add(s, t)),
                Feed::Branch(b) => {
                    let br = &self.branches[*b];
                    let d = br.delivered.as_ref().expect("fed");
                    match br.end_slot {
                        Some(s) => add(s, &d[0]),
                        None => d.iter().enumerate().for_each(|(s, t)| add(s, t)),
                    }
                }
            }
        }
        acc
    }

    fn complete(&mut self, pid: PromiseId) -> Result<()> {
        let rout = self.rout(pid);
        let p = &self.promises[pid];
        if !p.ready {
            return Err(LrpError::PromiseNotReady(pid));
        }
        let rins: Vec<Slots> = match p.role {
            PromiseRole::Aggregation => vec![rout],
            PromiseRole::Op => {
                let node = self.graph.node(p.origin);
                let args: Vec<Tensor> = p.args.iter().map(|a| a.as_ref().expect("ready")[0].clone()).collect();
                apply_rule(node, &self.cfg, Some(&args), &rout)?
                    .into_iter()
                    .map(|t| vec![t])
                    .collect()
            }
        };
        let (origin, role) = (p.origin, p.role);
        let p = &mut self.promises[pid];
        p.rins = rins.into_iter().map(Some).collect();
        p.complete = true;
        p.result = None;
        let branches = p.branches.clone();
        self.log(|| Event::PromiseComplete { promise: pid, origin });
        if role == PromiseRole::Op {
            self.live -= 1;
            self.count_propagation(origin);
        }
        for &b in branches.iter().rev() {
            self.work.push(Work::ExecBranch(b));
        }
        Ok(())
    }

    fn exec_branch(&mut self, branch: BranchId) -> Result<()> {
        let b = &self.branches[branch];
        let p = &self.promises[b.promise];
        let mut rel = p.rins[b.index].clone().expect("promise complete");
        if !b.steps.is_empty() {
            let mut t = rel.swap_remove(0);
            for step in &b.steps {
                t = (step.bwd)(&t)?;
            }
            rel = vec![t];
        }
        let nodes: Vec<NodeId> = b.internal_nodes().collect();
        let (pid, index) = (b.promise, b.index);
        let children = b.children.clone();
        self.log(|| Event::BranchBackward { branch, promise: pid, index, through: nodes.clone() });
        for n in nodes {
            self.count_propagation(n);
        }
        self.branches[branch].delivered = Some(rel);
        for &c in children.iter().rev() {
            self.work.push(Work::Trigger(c));
        }
        Ok(())
    }

    /// Number of op promises opened so far.
    pub fn num_op_promises(&self) -> usize {
        self.promises.iter().filter(|p| p.role == PromiseRole::Op).count()
    }

    pub fn all_complete(&self) -> bool {
        self.promises.iter().all(|p| p.complete)
    }
}
