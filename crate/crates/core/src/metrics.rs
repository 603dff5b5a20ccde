//! Perturbation curves, ABPC, comprehensiveness and sufficiency, and
//! operation coverage.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{LrpError, Result};
use crate::op::OpKind;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Occlusion {
    /// Replace occluded features by the input's mean.
    #[default]
    MeanFill,
    ZeroFill,
    /// Replace occluded features by a 3x3 box blur over the last two axes.
    Blur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Morf,
    Lerf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub kind: CurveKind,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub baseline: f64,
}

fn fill_values(input: &Tensor, occlusion: Occlusion) -> Vec<f64> {
    let n = input.numel();
    match occlusion {
        Occlusion::ZeroFill => vec![0.0; n],
        Occlusion::MeanFill => vec![input.sum() / n as f64; n],
        Occlusion::Blur => {
            let shape = input.shape();
            let (h, w) = match shape.len() {
                0 => (1, 1),
                1 => (1, shape[0]),
                r => (shape[r - 2], shape[r - 1]),
            };
            let d = input.data();
            let mut out = vec![0.0; n];
            for plane in 0..n / (h * w) {
                let base = plane * h * w;
                for i in 0..h {
                    for j in 0..w {
                        let (mut acc, mut cnt) = (0.0, 0.0);
                        for ii in i.saturating_sub(1)..(i + 2).min(h) {
                            for jj in j.saturating_sub(1)..(j + 2).min(w) {
                                acc += d[base + ii * w + jj];
                                cnt += 1.0;
                            }
                        }
                        out[base + i * w + j] = acc / cnt;
                    }
                }
            }
            out
        }
    }
}

/// Feature indices by descending relevance, ties by index.
fn descending(attr: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..attr.len()).collect();
    order.sort_by(|&a, &b| attr[b].total_cmp(&attr[a]));
    order
}

fn curve<F>(score: &mut F, input: &Tensor, order: &[usize], fill: &[f64], steps: usize, per_step: usize, kind: CurveKind, baseline: f64) -> Result<PerturbationCurve>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut data = input.data().to_vec();
    let mut xs = vec![0.0];
    let mut ys = vec![baseline];
    for step in 1..=steps {
        for &i in &order[(step - 1) * per_step..step * per_step] {
            data[i] = fill[i];
        }
        let x = Tensor::new(input.shape().to_vec(), data.clone())?;
        xs.push(step as f64 / steps as f64);
        ys.push(score(&x)?);
    }
    Ok(PerturbationCurve { kind, xs, ys, baseline })
}

/// MoRF and LeRF curves: occlude `per_step` features per step, most and
/// least relevant first, re-scoring after each step. `xs` runs from 0 to 1.
pub fn morf_lerf<F>(
    mut score: F,
    input: &Tensor,
    attributions: &Tensor,
    steps: usize,
    per_step: usize,
    occlusion: Occlusion,
) -> Result<(PerturbationCurve, PerturbationCurve)>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if attributions.shape() != input.shape() {
        return Err(LrpError::shape("morf_lerf", &[input.shape(), attributions.shape()]));
    }
    let features = input.numel();
    if steps * per_step > features {
        return Err(LrpError::StepOverflow {
            steps,
            per_step,
            features,
        });
    }
    let baseline = score(input)?;
    let fill = fill_values(input, occlusion);
    let down = descending(attributions.data());
    // Sorting the negated scores keeps ties in index order, which reversing
    // `down` would not.
    let neg: Vec<f64> = attributions.data().iter().map(|v| -v).collect();
    let up = descending(&neg);
    let morf = curve(&mut score, input, &down, &fill, steps, per_step, CurveKind::Morf, baseline)?;
    let lerf = curve(&mut score, input, &up, &fill, steps, per_step, CurveKind::Lerf, baseline)?;
    Ok((morf, lerf))
}

/// Trapezoidal area under a curve.
pub fn auc(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// `AUC(LeRF) - AUC(MoRF)`.
pub fn abpc(morf: &PerturbationCurve, lerf: &PerturbationCurve) -> Result<f64> {
    if morf.xs != lerf.xs || morf.ys.len() != morf.xs.len() || lerf.ys.len() != lerf.xs.len() {
        return Err(LrpError::CurveMismatch);
    }
    Ok(auc(&lerf.xs, &lerf.ys) - auc(&morf.xs, &morf.ys))
}

/// `(AUC(baseline) - AUC(MoRF), AUC(baseline) - AUC(LeRF))`.
pub fn comprehensiveness_sufficiency(morf: &PerturbationCurve, lerf: &PerturbationCurve, baseline: f64) -> Result<(f64, f64)> {
    if morf.xs != lerf.xs {
        return Err(LrpError::CurveMismatch);
    }
    let flat = vec![baseline; morf.xs.len()];
    let base = auc(&morf.xs, &flat);
    Ok((base - auc(&morf.xs, &morf.ys), base - auc(&lerf.xs, &lerf.ys)))
}

/// Fraction of the `k` highest-relevance features that are in `truth`.
pub fn top_k_hit(attributions: &[f64], truth: &[usize], k: usize) -> f64 {
    let k = k.min(attributions.len());
    if k == 0 {
        return 0.0;
    }
    let hits = descending(attributions)[..k].iter().filter(|i| truth.contains(i)).count();
    hits as f64 / k as f64
}

/// Mean and standard error of the mean.
pub fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindCoverage {
    pub count: usize,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_kind: BTreeMap<String, KindCoverage>,
    pub covered: usize,
    /// Names of kinds without a rule.
    pub uncovered: Vec<String>,
    pub uncovered_nodes: usize,
    pub total: usize,
}

impl CoverageReport {
    /// Covered share of nodes in percent; 100 for an empty graph.
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            100.0
        } else {
            100.0 * self.covered as f64 / self.total as f64
        }
    }

    pub fn is_complete(&self) -> bool {
        self.uncovered_nodes == 0
    }
}

/// Node counts per kind against the rule registry.
pub fn coverage_report<'a>(kinds: impl IntoIterator<Item = &'a OpKind>) -> CoverageReport {
    let mut r = CoverageReport::default();
    for k in kinds {
        let covered = k.is_supported();
        let e = r
            .per_kind
            .entry(k.name().to_string())
            .or_insert(KindCoverage { count: 0, covered });
        e.count += 1;
        r.total += 1;
        if covered {
            r.covered += 1;
        } else {
            r.uncovered_nodes += 1;
            if !r.uncovered.iter().any(|n| n == k.name()) {
                r.uncovered.push(k.name().to_string());
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(kind: CurveKind, xs: &[f64], ys: &[f64]) -> PerturbationCurve {
        PerturbationCurve {
            kind,
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            baseline: ys[0],
        }
    }

    #[test]
    fn abpc_examples() {
        let a = c(CurveKind::Morf, &[0.0, 1.0], &[1.0, 0.0]);
        assert_eq!(abpc(&a, &a).unwrap(), 0.0);
        let morf = c(CurveKind::Morf, &[0.0, 1.0], &[0.0, 0.0]);
        let lerf = c(CurveKind::Lerf, &[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(abpc(&morf, &lerf).unwrap(), 1.0);
        assert_eq!(abpc(&lerf, &morf).unwrap(), -1.0);
        let morf = c(CurveKind::Morf, &[0.0, 1.0], &[1.0, 0.0]);
        assert_eq!(abpc(&morf, &lerf).unwrap(), 0.5);
        let short = c(CurveKind::Lerf, &[0.0, 0.5], &[1.0, 1.0]);
        assert_eq!(abpc(&morf, &short), Err(LrpError::CurveMismatch));
    }

    #[test]
    fn comprehensiveness_examples() {
        let flat = c(CurveKind::Morf, &[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(comprehensiveness_sufficiency(&flat, &flat, 1.0).unwrap(), (0.0, 0.0));
        let zero = c(CurveKind::Morf, &[0.0, 1.0], &[0.0, 0.0]);
        assert_eq!(comprehensiveness_sufficiency(&zero, &flat, 1.0).unwrap().0, 1.0);
        let half = c(CurveKind::Morf, &[0.0, 1.0], &[1.0, 0.0]);
        assert_eq!(comprehensiveness_sufficiency(&half, &flat, 1.0).unwrap(), (0.5, 0.0));
    }

    #[test]
    fn morf_drops_first_on_single_feature_model() {
        let x = Tensor::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let attr = Tensor::from_vec(vec![0.0, 0.0, 5.0, 0.0]);
        let score = |t: &Tensor| Ok(t.data()[2]);
        let (morf, lerf) = morf_lerf(score, &x, &attr, 2, 1, Occlusion::ZeroFill).unwrap();
        assert_eq!(morf.ys, vec![1.0, 0.0, 0.0]);
        assert_eq!(lerf.ys, vec![1.0, 1.0, 1.0]);
        assert_eq!(morf.xs, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn zero_steps_and_overflow() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let (m, l) = morf_lerf(|t: &Tensor| Ok(t.sum()), &x, &x, 0, 1, Occlusion::MeanFill).unwrap();
        assert_eq!((m.ys.clone(), l.ys.clone()), (vec![3.0], vec![3.0]));
        let err = morf_lerf(|t: &Tensor| Ok(t.sum()), &x, &x, 3, 1, Occlusion::MeanFill).unwrap_err();
        assert!(matches!(err, LrpError::StepOverflow { .. }));
    }

    #[test]
    fn lerf_ties_break_by_index() {
        let x = Tensor::from_vec(vec![1.0, 1.0, 1.0]);
        let attr = Tensor::from_vec(vec![0.0, 0.0, 1.0]);
        let (_, lerf) = morf_lerf(|t: &Tensor| Ok(t.data()[0]), &x, &attr, 1, 1, Occlusion::ZeroFill).unwrap();
        assert_eq!(lerf.ys, vec![1.0, 0.0]);
    }

    #[test]
    fn coverage_examples() {
        let kinds = [OpKind::Conv2d, OpKind::Relu, OpKind::Relu];
        let r = coverage_report(kinds.iter());
        assert_eq!((r.covered, r.total, r.percent()), (3, 3, 100.0));
        let kinds = [OpKind::Relu, OpKind::from_name("FancyOp")];
        let r = coverage_report(kinds.iter());
        assert_eq!(r.uncovered, vec!["FancyOp".to_string()]);
        assert_eq!(r.covered + r.uncovered_nodes, r.total);
        let empty = coverage_report(core::iter::empty());
        assert_eq!((empty.covered, empty.total), (0, 0));
    }

    #[test]
    fn top_k_and_sem() {
        assert_eq!(top_k_hit(&[0.1, 0.9, 0.5], &[1], 1), 1.0);
        assert_eq!(top_k_hit(&[0.1, 0.9, 0.5], &[0], 2), 0.0);
        let (m, s) = mean_and_sem(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
