//! Promise engine against the full-cache oracle across the model zoo.

use std::time::{Duration, Instant};

use oplrp_core::{init_relevance, oracle_propagate_all, Engine, EngineOptions, InitMode, ModelSpec, RuleConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub cases: usize,
    /// Largest elementwise gap over every terminal of every case.
    pub max_abs_diff: f64,
    /// Cases whose propagation count was not one per reachable node.
    pub repeated_propagation: Vec<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_abs_diff <= tolerance && self.repeated_propagation.is_empty()
    }
}

/// Runs every zoo model for each seed under each named composite.
pub fn oracle_suite(seeds: std::ops::Range<u64>, composites: &[&str]) -> CliResult<SuiteReport> {
    let start = Instant::now();
    let mut report = SuiteReport {
        cases: 0,
        max_abs_diff: 0.0,
        repeated_propagation: Vec::new(),
        elapsed: Duration::ZERO,
    };
    let rules: Vec<(&str, RuleConfig)> = composites
        .iter()
        .map(|&c| {
            RuleConfig::composite(c)
                .map(|r| (c, r))
                .ok_or_else(|| CliError::Usage(format!("unknown composite `{c}`")))
        })
        .collect::<Result<_, _>>()?;

    for seed in seeds {
        for model in ModelSpec::zoo(seed) {
            let x = model.sample_input(seed.wrapping_add(7919));
            let (y, rg) = model.run_forward(&x)?;
            let target = model.predict(&x)?;
            let r0 = init_relevance(&y, target, InitMode::TargetLogitValue)?;
            for (name, cfg) in &rules {
                let engine = Engine::new(&rg.graph, EngineOptions::new(*cfg))?;
                let run = engine.run(&r0, None)?;
                let oracle = oracle_propagate_all(&rg.graph, &rg.shadow, cfg, &r0, false)?;
                for (node, expect) in &oracle {
                    let got = run.relevance(*node).ok_or(oplrp_core::LrpError::MissingValue {
                        node: *node,
                        what: "terminal relevance".into(),
                    })?;
                    report.max_abs_diff = report.max_abs_diff.max(got.max_abs_diff(expect)?);
                }
                let aux = engine.aux();
                let once = run
                    .propagations
                    .iter()
                    .enumerate()
                    .all(|(i, &n)| n == u32::from(aux.reachable[i]));
                if !once {
                    report.repeated_propagation.push(format!("{} seed {seed} {name}", model.name));
                }
                report.cases += 1;
            }
        }
    }
    report.elapsed = start.elapsed();
    Ok(report)
}
