//! File formats: JSON documents, attribution CSV, curve CSV and P2 heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use oplrp_core::metrics::PerturbationCurve;
use oplrp_core::{RuleConfig, Tensor};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

/// Reads a rule configuration and checks its ranges.
pub fn load_rules(path: &Path) -> CliResult<RuleConfig> {
    let cfg: RuleConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a `{"shape": [...], "data": [...]}` tensor, checking that the two agree.
pub fn load_tensor(path: &Path) -> CliResult<Tensor> {
    let raw: Tensor = read_json(path)?;
    Ok(Tensor::new(raw.shape().to_vec(), raw.data().to_vec())?)
}

pub fn attribution_csv(relevance: &Tensor) -> String {
    let mut out = String::from("feature_index,relevance\n");
    for (i, r) in relevance.data().iter().enumerate() {
        let _ = writeln!(out, "{i},{r:e}");
    }
    out
}

/// Parses the output of [`attribution_csv`] back into flat values.
pub fn parse_attribution_csv(text: &str) -> CliResult<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next() != Some("feature_index,relevance") {
        return Err(CliError::Usage("attribution CSV header must be `feature_index,relevance`".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(row, line)| {
            let parsed = line.split_once(',').and_then(|(i, r)| Some((i.parse::<usize>().ok()?, r.parse::<f64>().ok()?)));
            match parsed {
                Some((i, r)) if i == row => Ok(r),
                _ => Err(CliError::Usage(format!("malformed attribution row {}: `{line}`", row + 1))),
            }
        })
        .collect()
}

/// Plain (P2) grey map of the relevance, min-max scaled to 0..=255. Leading
/// axes are summed so the image is the last two axes; a vector becomes one row.
pub fn heatmap_pgm(relevance: &Tensor) -> String {
    let shape = relevance.shape();
    let (h, w) = match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        r => (shape[r - 2], shape[r - 1]),
    };
    let mut plane = vec![0.0; h * w];
    for (i, v) in relevance.data().iter().enumerate() {
        plane[i % (h * w)] += v;
    }
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;

    let mut out = format!("P2\n{w} {h}\n255\n");
    for row in plane.chunks(w) {
        let px: Vec<String> = row
            .iter()
            .map(|&v| {
                let g = if span > 0.0 { ((v - lo) / span * 255.0).round() } else { 0.0 };
                (g as u8).to_string()
            })
            .collect();
        out.push_str(&px.join(" "));
        out.push('\n');
    }
    out
}

pub fn curves_csv(morf: &PerturbationCurve, lerf: &PerturbationCurve) -> String {
    let mut out = String::from("step,fraction,morf,lerf\n");
    for (step, ((x, m), l)) in morf.xs.iter().zip(&morf.ys).zip(&lerf.ys).enumerate() {
        let _ = writeln!(out, "{step},{x},{m:e},{l:e}");
    }
    out
}
