use std::path::Path;
use std::process::{Command, Output};

fn oplrp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oplrp")).args(args).arg("--out").arg(out).output().unwrap()
}

fn stats(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("stats.json")).unwrap()).unwrap()
}

#[test]
fn attribute_writes_outputs_and_reuses_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let out = oplrp(&["attribute", "--model", "residual"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["attribution.csv", "heatmap.pgm", "stats.json", "path_cache.json"] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(tmp.path().join("attribution.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("feature_index,relevance"));
    assert_eq!(stats(tmp.path())["cache_hit"], false);

    assert!(oplrp(&["attribute", "--model", "residual"], tmp.path()).status.success());
    let second = stats(tmp.path());
    assert_eq!(second["cache_hit"], true);
    assert_eq!(second["conservative"], true);
}

#[test]
fn no_cache_leaves_no_cache_file() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(oplrp(&["stats", "--model", "mlp", "--no-cache"], tmp.path()).status.success());
    assert!(!tmp.path().join("path_cache.json").exists());
}

#[test]
fn exported_graph_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(oplrp(&["export", "--model", "toy_attention"], tmp.path()).status.success());
    let graph = tmp.path().join("graph.json");
    let direct = tmp.path().join("direct");
    let loaded = tmp.path().join("loaded");
    assert!(oplrp(&["attribute", "--model", "toy_attention"], &direct).status.success());
    assert!(oplrp(&["attribute", "--graph", graph.to_str().unwrap()], &loaded).status.success());
    let read = |d: &Path| std::fs::read_to_string(d.join("attribution.csv")).unwrap();
    assert_eq!(read(&direct), read(&loaded));
}

#[test]
fn eval_writes_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let out = oplrp(&["eval", "--model", "mlp", "--samples", "4"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curves = std::fs::read_to_string(tmp.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("step,fraction,morf,lerf"));
    assert!(tmp.path().join("metrics.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| oplrp(args, tmp.path()).status.code();
    assert_eq!(code(&["stats", "--composite", "nope"]), Some(1));
    assert_eq!(code(&["stats", "--model", "nope"]), Some(1));
    assert_eq!(code(&["attribute", "--model", "mlp", "--inject-op", "fancy_scatter"]), Some(2));
    let coverage = |extra: &[&str]| {
        let args = ["coverage", "--model", "mlp", "--inject-op", "fancy_scatter"];
        Command::new(env!("CARGO_BIN_EXE_oplrp")).args(args).args(extra).status().unwrap().code()
    };
    assert_eq!(coverage(&[]), Some(2));
    assert_eq!(coverage(&["--lenient"]), Some(0));
}
