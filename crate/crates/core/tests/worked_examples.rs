//! Event-log checks for the three hand-sized traversals: a single-branch
//! chain, a nested two-level promise tree and the residual deadlock.

use oplrp_core::*;

fn linear(g: &mut GraphRecorder, x: NodeId, fan_in: usize, fan_out: usize) -> NodeId {
    let w: Vec<f64> = (0..fan_in * fan_out).map(|k| 0.3 + 0.1 * k as f64).collect();
    let w = g.parameter(Tensor::matrix(fan_out, fan_in, w).unwrap());
    g.op(OpKind::Linear, &[x, w], OpAttrs::none()).unwrap()
}

fn run_logged(rg: &RecordedGraph) -> Run {
    let y = rg.shadow.outputs[rg.graph.root().0][0].clone();
    let opts = EngineOptions { record_events: true, ..EngineOptions::new(RuleConfig::epsilon()) };
    Engine::new(&rg.graph, opts).unwrap().run(&y, None).unwrap()
}

fn position(events: &[Event], pred: impl Fn(&Event) -> bool) -> usize {
    events
        .iter()
        .position(pred)
        .unwrap_or_else(|| panic!("event not found in {events:#?}"))
}

fn assert_once(run: &Run, graph: &Graph) {
    let aux = build_aux_graph(graph, graph.root()).unwrap();
    for (i, &n) in run.propagations.iter().enumerate() {
        let expect = u32::from(aux.reachable[i]);
        assert_eq!(n, expect, "node {i} propagated {n} times");
    }
}

/// x -> E(linear) -> D(relu) -> C(neg) -> B(reshape) -> A(sum)
#[test]
fn chain_promise_fast_forwards_from_arg_node() {
    let mut g = GraphRecorder::new();
    let x = g.input(Tensor::from_vec(vec![1.0, 2.0]));
    let e = linear(&mut g, x, 2, 2);
    let d = g.op(OpKind::Relu, &[e], OpAttrs::none()).unwrap();
    let c = g.op(OpKind::Neg, &[d], OpAttrs::none()).unwrap();
    let b = g.op(OpKind::Reshape, &[c], OpAttrs { shape: Some(vec![1, 2]), ..OpAttrs::none() }).unwrap();
    let a = g.op(OpKind::Sum, &[b], OpAttrs::none()).unwrap();
    let rg = g.finish(a).unwrap();
    let run = run_logged(&rg);
    let ev = &run.events;

    let created = position(ev, |e| matches!(e, Event::PromiseCreated { origin, branches: 1, .. } if *origin == a));
    let steps: Vec<NodeId> = ev
        .iter()
        .filter_map(|e| match e {
            Event::BranchStep { node, .. } => Some(*node),
            _ => None,
        })
        .collect();
    assert_eq!(steps, vec![b, c, d]);
    let reached = position(ev, |ev| matches!(ev, Event::ArgReached { node, .. } if *node == e));
    let fwd = position(ev, |ev| matches!(ev, Event::ForwardChain { through, .. } if *through == vec![d, c, b]));
    let complete = position(ev, |ev| matches!(ev, Event::PromiseComplete { origin, .. } if *origin == a));
    let bwd = position(ev, |ev| matches!(ev, Event::BranchBackward { through, .. } if *through == vec![b, c, d]));
    assert!(created < reached && reached < fwd && fwd < complete && complete < bwd);

    // Nothing on the chain gets relevance before the promise completes.
    for node in [a, b, c, d, e] {
        let p = position(ev, |ev| matches!(ev, Event::Propagate { node: n } if *n == node));
        assert!(p > complete, "{node:?} propagated early");
    }
    assert!(!ev.iter().any(|e| matches!(e, Event::Stall { .. })));
    assert_eq!(run.stats.internal_nodes, 3);
    assert_eq!(run.stats.delta, 3);
    assert_once(&run, &rg.graph);

    let oracle = oracle_propagate(&rg.graph, &rg.shadow, &RuleConfig::epsilon(), &rg.shadow.outputs[a.0][0], x).unwrap();
    assert!(run.relevance(x).unwrap().max_abs_diff(&oracle).unwrap() <= 1e-12);
}

/// A = add(B, C), B = add(D, E); D, E and C are inputs.
#[test]
fn promise_tree_resolves_parents_first() {
    let mut g = GraphRecorder::new();
    let d = g.input(Tensor::from_vec(vec![1.0, 2.0]));
    let e = g.input(Tensor::from_vec(vec![0.5, -1.0]));
    let c = g.input(Tensor::from_vec(vec![2.0, 1.0]));
    let b = g.op(OpKind::Add, &[d, e], OpAttrs::none()).unwrap();
    let a = g.op(OpKind::Add, &[b, c], OpAttrs::none()).unwrap();
    let rg = g.finish(a).unwrap();
    let run = run_logged(&rg);

    let mut promise_of = std::collections::BTreeMap::new();
    for ev in &run.events {
        if let Event::PromiseCreated { promise, origin, .. } = ev {
            promise_of.insert(*promise, *origin);
        }
    }
    assert_eq!(promise_of.len(), 2);

    // Label completion events as P_X or b_{X,i}.
    let label = |node: NodeId| if node == a { "A" } else { "B" };
    let order: Vec<String> = run
        .events
        .iter()
        .filter_map(|ev| match ev {
            Event::PromiseComplete { origin, .. } => Some(format!("P_{}", label(*origin))),
            Event::BranchBackward { promise, index, .. } => Some(format!("b_{}{}", label(promise_of[promise]), index + 1)),
            _ => None,
        })
        .collect();
    assert_eq!(order, ["P_A", "b_A1", "P_B", "b_B1", "b_B2", "b_A2"]);

    let nested = run.events.iter().any(|ev| matches!(ev, Event::PromiseCreated { origin, parent: Some(_), .. } if *origin == b));
    assert!(nested, "P_B must hang under a branch of P_A");
    assert_once(&run, &rg.graph);
}

/// E = linear(x); C = relu(E); D = neg(E); B = linear(C); A = add(B, D).
/// B and E are Arg Nodes; the branch through D meets E before C has landed.
#[test]
fn residual_deadlock_resolves_through_pre_promise() {
    let mut g = GraphRecorder::new();
    let x = g.input(Tensor::from_vec(vec![1.0, -2.0]));
    let e = linear(&mut g, x, 2, 2);
    let c = g.op(OpKind::Relu, &[e], OpAttrs::none()).unwrap();
    let d = g.op(OpKind::Neg, &[e], OpAttrs::none()).unwrap();
    let b = linear(&mut g, c, 2, 2);
    let a = g.op(OpKind::Add, &[b, d], OpAttrs::none()).unwrap();
    let rg = g.finish(a).unwrap();
    let run = run_logged(&rg);
    let ev = &run.events;

    let (pre, pre_at) = ev
        .iter()
        .enumerate()
        .find_map(|(i, ev)| match ev {
            Event::PrePromiseCreated { promise, node, .. } if *node == e => Some((*promise, i)),
            _ => None,
        })
        .expect("pre-promise at E");
    let p_a = ev
        .iter()
        .find_map(|ev| match ev {
            Event::PromiseCreated { promise, origin, .. } if *origin == a => Some(*promise),
            _ => None,
        })
        .unwrap();

    let chain_pre = position(ev, |ev| matches!(ev, Event::ForwardChain { promise, .. } if *promise == pre));
    let chain_a = position(ev, |ev| matches!(ev, Event::ForwardChain { promise, through, .. } if *promise == p_a && *through == vec![d]));
    let prop_c = position(ev, |ev| matches!(ev, Event::Propagate { node } if *node == c));
    let promoted = position(ev, |ev| matches!(ev, Event::Promoted { promise, node } if *promise == pre && *node == e));
    let prop_e = position(ev, |ev| matches!(ev, Event::Propagate { node } if *node == e));

    assert!(pre_at < chain_pre && chain_pre < chain_a && chain_a < prop_c);
    assert!(prop_c < promoted && promoted < prop_e);
    let early_backward = ev[..promoted]
        .iter()
        .any(|ev| matches!(ev, Event::BranchBackward { promise, .. } if *promise == pre));
    assert!(!early_backward, "relevance passed through E before promotion");
    assert!(matches!(ev[pre_at + 1], Event::Visit { node, reach_ahead: true } if node == e));

    assert_eq!(run.stats.pre_promises, 1);
    assert_once(&run, &rg.graph);
    let oracle = oracle_propagate(&rg.graph, &rg.shadow, &RuleConfig::epsilon(), &rg.shadow.outputs[a.0][0], x).unwrap();
    assert!(run.relevance(x).unwrap().max_abs_diff(&oracle).unwrap() <= 1e-12);
}
