use oplrp_core::zoo::build_op_tour;
use oplrp_core::{init_relevance, oracle_propagate_all, Engine, EngineOptions, InitMode, ModelSpec, RuleConfig};

fn check(model: &ModelSpec, input_seed: u64, rules: RuleConfig) -> f64 {
    let x = model.sample_input(input_seed);
    let (y, rg) = model.run_forward(&x).unwrap();
    let target = (input_seed as usize) % y.numel();
    let r0 = init_relevance(&y, target, InitMode::TargetLogitValue).unwrap();
    let run = Engine::new(&rg.graph, EngineOptions::new(rules)).unwrap().run(&r0, None).unwrap();
    let oracle = oracle_propagate_all(&rg.graph, &rg.shadow, &rules, &r0, false).unwrap();
    assert_eq!(run.terminals.keys().collect::<Vec<_>>(), oracle.keys().collect::<Vec<_>>());
    let mut worst = 0.0f64;
    for (id, t) in &oracle {
        worst = worst.max(run.terminals[id].max_abs_diff(t).unwrap());
    }
    assert!(run.propagations.iter().enumerate().all(|(i, &c)| c == u32::from(run_reachable(&rg.graph, i))),
        "{}: propagation counts {:?}", model.name, run.propagations);
    worst
}

fn run_reachable(g: &oplrp_core::Graph, i: usize) -> bool {
    let aux = oplrp_core::build_aux_graph(g, g.root()).unwrap();
    aux.reachable[i]
}

#[test]
fn zoo_matches_oracle() {
    for seed in 0..5u64 {
        let mut models = ModelSpec::zoo(seed);
        models.push(build_op_tour(seed));
        for m in &models {
            for rules in [RuleConfig::epsilon(), RuleConfig::gamma(), RuleConfig::attnlrp_toy()] {
                let d = check(m, seed + 100, rules);
                assert!(d <= 1e-9, "{} seed {seed}: diff {d}", m.name);
            }
        }
    }
}
