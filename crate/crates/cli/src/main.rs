use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oplrp_core::metrics::{coverage_report, Occlusion};
use oplrp_core::{
    init_relevance, Engine, EngineOptions, GraphExport, InitMode, LrpError, ModelSpec, PathCache, PromiseStats,
    RecordedGraph, RuleConfig, Run,
};
use oplrp::io::{self, attribution_csv, curves_csv, heatmap_pgm};
use oplrp::{evaluate, oracle_suite, CliError, CliResult, EvalConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "oplrp", version)]
#[command(about = "Operation-level relevance propagation over recorded computation graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute one prediction: attribution.csv, heatmap.pgm and stats.json
    Attribute(RunArgs),
    /// MoRF/LeRF curves and ABPC, comprehensiveness and sufficiency against random attributions
    Eval(EvalArgs),
    /// Count graph nodes per kind against the rule registry
    Coverage(CoverageArgs),
    /// Promise statistics of one traversal as JSON
    Stats(RunArgs),
    /// Compare the promise engine with the full-cache oracle on the model zoo
    Selftest(SelftestArgs),
    /// Write a model's recorded graph as graph.json
    Export(ExportArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Zoo model: mlp, residual, toy_attention, toy_cnn or op_tour
    #[arg(long, default_value = "toy_cnn")]
    model: String,

    /// Seed for the model parameters
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Splice an opaque node of this kind in front of the model
    #[arg(long)]
    inject_op: Option<String>,
}

impl ModelArgs {
    fn spec(&self) -> CliResult<ModelSpec> {
        let spec = ModelSpec::by_name(&self.model, self.seed).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown model `{}` (expected one of {})",
                self.model,
                ModelSpec::NAMES.join(", ")
            ))
        })?;
        Ok(match &self.inject_op {
            Some(kind) => spec.with_injected(kind),
            None => spec,
        })
    }
}

#[derive(Args)]
struct RuleArgs {
    /// Rule configuration JSON
    #[arg(long, conflicts_with = "composite")]
    rules: Option<PathBuf>,

    /// Named rule composite: epsilon, gamma or attnlrp-toy
    #[arg(long, default_value = "epsilon")]
    composite: String,
}

impl RuleArgs {
    fn config(&self) -> CliResult<RuleConfig> {
        match &self.rules {
            Some(path) => io::load_rules(path),
            None => RuleConfig::composite(&self.composite)
                .ok_or_else(|| CliError::Usage(format!("unknown composite `{}`", self.composite))),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Seed the target position with its logit
    TargetLogit,
    /// Seed the target position with 1
    OneHot,
}

impl From<Mode> for InitMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::TargetLogit => InitMode::TargetLogitValue,
            Mode::OneHot => InitMode::OneHotUnit,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    rules: RuleArgs,

    /// Exported graph JSON to use instead of a zoo model
    #[arg(long, conflicts_with_all = ["input", "inject_op"])]
    graph: Option<PathBuf>,

    /// Input tensor JSON `{"shape": [...], "data": [...]}`
    #[arg(long)]
    input: Option<PathBuf>,

    /// Seed for the sampled input when --input is not given (defaults to --seed)
    #[arg(long)]
    input_seed: Option<u64>,

    #[arg(long, value_enum, default_value = "target-logit")]
    mode: Mode,

    /// Output position to explain (defaults to the predicted class)
    #[arg(long)]
    target: Option<usize>,

    /// Route relevance through unsupported nodes unchanged instead of failing
    #[arg(long)]
    lenient: bool,

    /// Reuse and refresh <out>/path_cache.json (the default)
    #[arg(long, overrides_with = "no_cache")]
    cache: bool,

    /// Neither read nor write the path cache
    #[arg(long)]
    no_cache: bool,

    /// Also write the traversal event log to events.json
    #[arg(long)]
    events: bool,

    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    rules: RuleArgs,

    #[arg(long, value_enum, default_value = "target-logit")]
    mode: Mode,

    #[arg(long, default_value_t = 200)]
    samples: usize,

    /// Occlusion steps (defaults to one per feature)
    #[arg(long)]
    steps: Option<usize>,

    /// Features occluded per step
    #[arg(long, default_value_t = 1)]
    per_step: usize,

    #[arg(long, value_enum, default_value = "mean-fill")]
    occlusion: OcclusionArg,

    #[arg(long, default_value_t = 1000)]
    input_seed: u64,

    #[arg(long, default_value_t = 99)]
    random_seed: u64,

    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OcclusionArg {
    MeanFill,
    ZeroFill,
    Blur,
}

impl From<OcclusionArg> for Occlusion {
    fn from(o: OcclusionArg) -> Self {
        match o {
            OcclusionArg::MeanFill => Occlusion::MeanFill,
            OcclusionArg::ZeroFill => Occlusion::ZeroFill,
            OcclusionArg::Blur => Occlusion::Blur,
        }
    }
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Exported graph JSON to scan instead of a zoo model
    #[arg(long, conflicts_with = "inject_op")]
    graph: Option<PathBuf>,

    /// Report uncovered kinds without failing
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct SelftestArgs {
    /// Seeds per model, starting at 0
    #[arg(long, default_value_t = 100)]
    seeds: u64,

    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Serialize)]
struct StatsDoc<'a> {
    #[serde(flatten)]
    stats: &'a PromiseStats,
    conservative: bool,
    warnings: &'a [String],
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Attribute(args) => attribute(&args),
        Command::Stats(args) => stats(&args),
        Command::Eval(args) => eval(&args),
        Command::Coverage(args) => coverage(&args),
        Command::Selftest(args) => selftest(&args),
        Command::Export(args) => export(&args),
    }
}

/// Pretty JSON on stdout. A closed pipe (`| head`) is not an error.
fn emit_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn record(args: &RunArgs) -> CliResult<RecordedGraph> {
    if let Some(path) = &args.graph {
        let export: GraphExport = io::read_json(path)?;
        return Ok(RecordedGraph::from_export(&export)?);
    }
    let spec = args.model.spec()?;
    let x = match &args.input {
        Some(path) => io::load_tensor(path)?,
        None => spec.sample_input(args.input_seed.unwrap_or(args.model.seed)),
    };
    Ok(spec.run_forward(&x)?.1)
}

/// Records the graph and runs the engine, reading and refreshing the path
/// cache in `args.out` when caching is on.
fn traverse(args: &RunArgs) -> CliResult<(RecordedGraph, Run)> {
    let rules = args.rules.config()?;
    let rg = record(args)?;
    let y = &rg.shadow.outputs[rg.graph.root().0][0];
    let target = match args.target {
        Some(t) => t,
        None => argmax(y.data()),
    };
    let r0 = init_relevance(y, target, args.mode.into())?;

    let opts = EngineOptions {
        lenient: args.lenient,
        record_events: args.events,
        ..EngineOptions::new(rules)
    };
    let engine = Engine::new(&rg.graph, opts)?;
    let use_cache = args.cache || !args.no_cache;
    let cache_path = args.out.join("path_cache.json");
    let cached: Option<PathCache> = if use_cache && cache_path.exists() {
        Some(io::read_json(&cache_path)?)
    } else {
        None
    };
    let run = engine.run(&r0, cached.as_ref())?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    if use_cache {
        ensure_dir(&args.out)?;
        io::write_json(&cache_path, &run.cache)?;
    }
    Ok((rg, run))
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i)
}

fn write_stats(path: &Path, run: &Run) -> CliResult<()> {
    io::write_json(
        path,
        &StatsDoc {
            stats: &run.stats,
            conservative: run.conservative,
            warnings: &run.warnings,
        },
    )
}

fn attribute(args: &RunArgs) -> CliResult<()> {
    let (rg, run) = traverse(args)?;
    let x = *rg
        .graph
        .inputs()
        .first()
        .ok_or_else(|| CliError::Usage("graph has no input node".into()))?;
    let shape = &rg.graph.node(x).output_shapes[0];
    let relevance = run
        .relevance(x)
        .cloned()
        .unwrap_or_else(|| oplrp_core::Tensor::zeros(shape));

    ensure_dir(&args.out)?;
    io::write_text(&args.out.join("attribution.csv"), &attribution_csv(&relevance))?;
    io::write_text(&args.out.join("heatmap.pgm"), &heatmap_pgm(&relevance))?;
    write_stats(&args.out.join("stats.json"), &run)?;
    if args.events {
        io::write_json(&args.out.join("events.json"), &run.events)?;
    }
    println!(
        "input relevance {:.6e} over {} features, {} promises, {} visits{}",
        relevance.sum(),
        relevance.numel(),
        run.stats.num_promises,
        run.stats.visits,
        if run.stats.cache_hit { " (cached)" } else { "" }
    );
    Ok(())
}

fn stats(args: &RunArgs) -> CliResult<()> {
    let (_, run) = traverse(args)?;
    let doc = StatsDoc {
        stats: &run.stats,
        conservative: run.conservative,
        warnings: &run.warnings,
    };
    emit_json(&doc);
    if args.events {
        ensure_dir(&args.out)?;
        io::write_json(&args.out.join("events.json"), &run.events)?;
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> CliResult<()> {
    let spec = args.model.spec()?;
    let features: usize = spec.input_shape.iter().product();
    let mut cfg = EvalConfig::new(args.rules.config()?, features);
    cfg.samples = args.samples;
    cfg.per_step = args.per_step;
    cfg.steps = args.steps.unwrap_or(features / args.per_step.max(1));
    cfg.occlusion = args.occlusion.into();
    cfg.mode = args.mode.into();
    cfg.input_seed = args.input_seed;
    cfg.random_seed = args.random_seed;

    let report = evaluate(&spec, &cfg)?;
    ensure_dir(&args.out)?;
    io::write_text(&args.out.join("curves.csv"), &curves_csv(&report.morf, &report.lerf))?;
    io::write_json(&args.out.join("metrics.json"), &report)?;
    println!(
        "ABPC lrp {:.4} ± {:.4}, random {:.4} ± {:.4} ({:.1} SE apart)",
        report.lrp.abpc.mean, report.lrp.abpc.sem, report.random.abpc.mean, report.random.abpc.sem, report.margin_in_random_se
    );
    Ok(())
}

fn coverage(args: &CoverageArgs) -> CliResult<()> {
    let graph = match &args.graph {
        Some(path) => io::read_json::<GraphExport>(path)?,
        None => {
            let spec = args.model.spec()?;
            let (_, rg) = spec.run_forward(&spec.sample_input(args.model.seed))?;
            rg.graph.to_export(None)
        }
    };
    let kinds = graph.kinds();
    let report = coverage_report(&kinds);
    emit_json(&report);
    eprintln!("{:.2}% of {} nodes covered", report.percent(), report.total);
    if report.is_complete() || args.lenient {
        return Ok(());
    }
    let first = graph
        .nodes
        .iter()
        .find(|n| !n.kind.is_supported())
        .expect("incomplete report has an uncovered node");
    Err(LrpError::UnsupportedNode {
        node: first.id,
        kind: first.kind.name().to_string(),
    }
    .into())
}

fn selftest(args: &SelftestArgs) -> CliResult<()> {
    let report = oracle_suite(0..args.seeds, &RuleConfig::COMPOSITES)?;
    emit_json(&report);
    if report.passed(args.tolerance) {
        println!("selftest passed: {} cases in {:.2?}", report.cases, report.elapsed);
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "engine and oracle disagree by {:e} (tolerance {:e}); repeated propagation in {:?}",
            report.max_abs_diff, args.tolerance, report.repeated_propagation
        )))
    }
}

fn export(args: &ExportArgs) -> CliResult<()> {
    let spec = args.model.spec()?;
    let (_, rg) = spec.run_forward(&spec.sample_input(args.model.seed))?;
    ensure_dir(&args.out)?;
    let path = args.out.join("graph.json");
    io::write_json(&path, &rg.graph.to_export(Some(&rg.shadow)))?;
    println!("{}", path.display());
    Ok(())
}
