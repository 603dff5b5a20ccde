//! Perturbation-curve evaluation of attributions over a batch of sampled inputs.

use oplrp_core::metrics::{abpc, comprehensiveness_sufficiency, mean_and_sem, morf_lerf, CurveKind, Occlusion, PerturbationCurve};
use oplrp_core::{init_relevance, Engine, EngineOptions, InitMode, LrpError, ModelSpec, RuleConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub samples: usize,
    pub steps: usize,
    pub per_step: usize,
    pub occlusion: Occlusion,
    pub rules: RuleConfig,
    pub mode: InitMode,
    /// Sample `i` uses input seed `input_seed + i`.
    pub input_seed: u64,
    /// Seeds the uniform random attributions used as the reference method.
    pub random_seed: u64,
}

impl EvalConfig {
    /// 200 samples, one feature per step until `features` are all occluded.
    pub fn new(rules: RuleConfig, features: usize) -> Self {
        EvalConfig {
            samples: 200,
            steps: features,
            per_step: 1,
            occlusion: Occlusion::MeanFill,
            rules,
            mode: InitMode::TargetLogitValue,
            input_seed: 1000,
            random_seed: 99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
}

impl MeanSem {
    fn of(values: &[f64]) -> Self {
        let (mean, sem) = mean_and_sem(values);
        MeanSem { mean, sem }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub abpc: MeanSem,
    pub comprehensiveness: MeanSem,
    pub sufficiency: MeanSem,
    #[serde(skip)]
    pub per_sample_abpc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub config: EvalConfig,
    pub lrp: MethodScores,
    pub random: MethodScores,
    /// `(ABPC(lrp) - ABPC(random)) / SE(random)`.
    pub margin_in_random_se: f64,
    /// Sample-averaged LRP curves.
    pub morf: PerturbationCurve,
    pub lerf: PerturbationCurve,
}

#[derive(Default)]
struct Accumulator {
    abpc: Vec<f64>,
    comp: Vec<f64>,
    suff: Vec<f64>,
}

impl Accumulator {
    fn push(&mut self, morf: &PerturbationCurve, lerf: &PerturbationCurve) -> Result<(), LrpError> {
        self.abpc.push(abpc(morf, lerf)?);
        let (c, s) = comprehensiveness_sufficiency(morf, lerf, morf.baseline)?;
        self.comp.push(c);
        self.suff.push(s);
        Ok(())
    }

    fn finish(self) -> MethodScores {
        MethodScores {
            abpc: MeanSem::of(&self.abpc),
            comprehensiveness: MeanSem::of(&self.comp),
            sufficiency: MeanSem::of(&self.suff),
            per_sample_abpc: self.abpc,
        }
    }
}

fn add_into(sum: &mut Vec<f64>, ys: &[f64]) {
    if sum.is_empty() {
        sum.resize(ys.len(), 0.0);
    }
    for (s, y) in sum.iter_mut().zip(ys) {
        *s += y;
    }
}

/// Relevance of the model input for `target` under `rules`.
pub fn input_relevance(model: &ModelSpec, input: &Tensor, target: usize, rules: RuleConfig, mode: InitMode) -> Result<Tensor, LrpError> {
    let (y, rg) = model.run_forward(input)?;
    let r0 = init_relevance(&y, target, mode)?;
    let run = Engine::new(&rg.graph, EngineOptions::new(rules))?.run(&r0, None)?;
    let x = rg.graph.inputs()[0];
    Ok(run.relevance(x).cloned().unwrap_or_else(|| input.zeros_like()))
}

pub fn evaluate(model: &ModelSpec, cfg: &EvalConfig) -> CliResult<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.random_seed);
    let (mut lrp, mut random) = (Accumulator::default(), Accumulator::default());
    let (mut morf_sum, mut lerf_sum) = (Vec::new(), Vec::new());
    let mut xs = Vec::new();
    let mut baseline = 0.0;

    for i in 0..cfg.samples {
        let x = model.sample_input(cfg.input_seed + i as u64);
        let target = model.predict(&x)?;
        let score = |z: &Tensor| model.score(z, target);

        let attr = input_relevance(model, &x, target, cfg.rules, cfg.mode)?;
        let (morf, lerf) = morf_lerf(score, &x, &attr, cfg.steps, cfg.per_step, cfg.occlusion)?;
        lrp.push(&morf, &lerf)?;
        add_into(&mut morf_sum, &morf.ys);
        add_into(&mut lerf_sum, &lerf.ys);
        baseline += morf.baseline;
        xs = morf.xs;

        let noise: Vec<f64> = (0..x.numel()).map(|_| rng.random::<f64>()).collect();
        let noise = Tensor::new(x.shape().to_vec(), noise)?;
        let (morf, lerf) = morf_lerf(score, &x, &noise, cfg.steps, cfg.per_step, cfg.occlusion)?;
        random.push(&morf, &lerf)?;
    }

    let n = cfg.samples.max(1) as f64;
    let mean = |v: Vec<f64>| v.into_iter().map(|s| s / n).collect::<Vec<_>>();
    let (lrp, random) = (lrp.finish(), random.finish());
    let margin = if random.abpc.sem > 0.0 {
        (lrp.abpc.mean - random.abpc.mean) / random.abpc.sem
    } else {
        f64::INFINITY
    };
    Ok(EvalReport {
        model: model.name.clone(),
        config: *cfg,
        margin_in_random_se: margin,
        morf: PerturbationCurve {
            kind: CurveKind::Morf,
            xs: xs.clone(),
            ys: mean(morf_sum),
            baseline: baseline / n,
        },
        lerf: PerturbationCurve {
            kind: CurveKind::Lerf,
            xs,
            ys: mean(lerf_sum),
            baseline: baseline / n,
        },
        lrp,
        random,
    })
}
