//! Relevance propagation rules.
//!
//! Every rule maps the relevance of an op's outputs to relevance for each of
//! its forward arguments. [`apply_rule`] picks the rule for a node kind; the
//! free functions are the rules themselves and can be called directly.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{LrpError, Result};
use crate::graph::NodeRecord;
use crate::kernels::{
    self, as_rows, axis_split, expand_map, fold, masked_fill_mask, matmul, nchw_to_rows, rows_to_nchw,
    slice_bounds, slice_map, softmax_forward, transpose_axes, unfold, weight_matrix, ConvGeom,
};
use crate::op::OpKind;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxMode {
    /// Input relevance `x_i (R_i - s_i sum_j R_j)` per row.
    #[default]
    Attnlrp,
    /// The softmax passes no relevance at all.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerNormMode {
    /// Normalization statistics are treated as constants.
    #[default]
    DetachedIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub epsilon: f64,
    pub gamma_linear: f64,
    pub gamma_conv: f64,
    pub softmax_mode: SoftmaxMode,
    /// Split activation-by-activation products between both operands. When
    /// off, all relevance goes to the right-hand (value) operand.
    pub bilinear_enabled: bool,
    pub layernorm_mode: LayerNormMode,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig::epsilon()
    }
}

impl RuleConfig {
    pub fn epsilon() -> Self {
        RuleConfig {
            epsilon: 1e-9,
            gamma_linear: 0.0,
            gamma_conv: 0.0,
            softmax_mode: SoftmaxMode::Attnlrp,
            bilinear_enabled: true,
            layernorm_mode: LayerNormMode::DetachedIdentity,
        }
    }

    pub fn gamma() -> Self {
        RuleConfig {
            gamma_linear: 0.001,
            gamma_conv: 130.0,
            ..RuleConfig::epsilon()
        }
    }

    /// Gamma rules with the softmax skipped and attention routed through values.
    pub fn attnlrp_toy() -> Self {
        RuleConfig {
            softmax_mode: SoftmaxMode::Skip,
            bilinear_enabled: false,
            ..RuleConfig::gamma()
        }
    }

    pub fn composite(name: &str) -> Option<Self> {
        match name {
            "epsilon" => Some(Self::epsilon()),
            "gamma" => Some(Self::gamma()),
            "attnlrp-toy" => Some(Self::attnlrp_toy()),
            _ => None,
        }
    }

    pub const COMPOSITES: [&'static str; 3] = ["epsilon", "gamma", "attnlrp-toy"];

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(LrpError::attr("RuleConfig", "epsilon must be positive"));
        }
        if !(self.gamma_linear >= 0.0 && self.gamma_conv >= 0.0) {
            return Err(LrpError::attr("RuleConfig", "gammas must be non-negative"));
        }
        Ok(())
    }
}

/// `z + sign(z) * eps` with `sign(0) = +1`.
#[inline]
pub fn stabilize(z: f64, eps: f64) -> f64 {
    if z >= 0.0 {
        z + eps
    } else {
        z - eps
    }
}

fn check(op: &str, ok: bool, shapes: &[&[usize]]) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(LrpError::shape(op, shapes))
    }
}

/// Epsilon rule for `z = x W`. `x` is `(.., in)`, `W` is `(in, out)`, and
/// `z`, `r_out` are `(.., out)`.
pub fn epsilon_rule(x: &Tensor, w: &Tensor, z: &Tensor, r_out: &Tensor, eps: f64) -> Result<Tensor> {
    check(
        "epsilon_rule",
        w.rank() == 2
            && x.shape().last() == Some(&w.shape()[0])
            && z.shape() == r_out.shape()
            && z.shape().last() == Some(&w.shape()[1])
            && z.numel() / w.shape()[1] == x.numel() / w.shape()[0],
        &[x.shape(), w.shape(), z.shape(), r_out.shape()],
    )?;
    let s = z.zip_map(r_out, |zv, r| r / stabilize(zv, eps))?;
    let c = matmul(&as_rows(&s)?, &w.transpose(0, 1)?)?;
    let xr = as_rows(x)?;
    xr.zip_map(&c, |a, b| a * b)?.reshape(x.shape())
}

/// Gamma rule: the epsilon rule on `W + gamma * max(W, 0)`, with the
/// denominator recomputed from the boosted weights.
pub fn gamma_rule(x: &Tensor, w: &Tensor, r_out: &Tensor, gamma: f64, eps: f64) -> Result<Tensor> {
    let boosted = w.map(|v| v + gamma * v.max(0.0));
    let z = kernels::linear(x, &boosted, None)?;
    epsilon_rule(x, &boosted, &z, r_out, eps)
}

/// Splits `r_out` between operands in proportion to `|operand|`, elementwise.
/// Operands are broadcast to the shape of `r_out` and the shares summed back
/// onto each operand's own shape. Positions where every operand is zero are
/// split evenly.
pub fn abs_ratio_rule(operands: &[&Tensor], r_out: &Tensor) -> Result<Vec<Tensor>> {
    let big: Vec<Tensor> = operands
        .iter()
        .map(|t| t.broadcast_to(r_out.shape()))
        .collect::<Result<_>>()?;
    let k = operands.len() as f64;
    let n = r_out.numel();
    let mut shares: Vec<Vec<f64>> = vec![vec![0.0; n]; operands.len()];
    for i in 0..n {
        let denom: f64 = big.iter().map(|t| libm::fabs(t.data()[i])).sum();
        for (m, t) in big.iter().enumerate() {
            let frac = if denom == 0.0 { 1.0 / k } else { libm::fabs(t.data()[i]) / denom };
            shares[m][i] = r_out.data()[i] * frac;
        }
    }
    shares
        .into_iter()
        .zip(operands)
        .map(|(s, op)| r_out.like(r_out.shape().to_vec(), s).reduce_to(op.shape()))
        .collect()
}

/// Bilinear rule for `O = A V` with `A` `(j, i)`, `V` `(i, p)`: each product
/// term `A_ji V_ip` takes its share of `R_jp / (2 O_jp + sign * eps)` for
/// both operands.
pub fn bilinear_rule(a: &Tensor, v: &Tensor, o: &Tensor, r_out: &Tensor, eps: f64) -> Result<(Tensor, Tensor)> {
    check_bilinear(a, v, o, r_out)?;
    let s = o.zip_map(r_out, |ov, r| r / stabilize(2.0 * ov, eps))?;
    let ra = a.zip_map(&matmul(&s, &v.transpose(0, 1)?)?, |x, y| x * y)?;
    let rv = v.zip_map(&matmul(&a.transpose(0, 1)?, &s)?, |x, y| x * y)?;
    Ok((ra, rv))
}

/// Value-path rule for `O = A V`: `A` acts as fixed weights and all relevance
/// goes to `V` through the epsilon rule.
pub fn value_path_rule(a: &Tensor, v: &Tensor, o: &Tensor, r_out: &Tensor, eps: f64) -> Result<(Tensor, Tensor)> {
    check_bilinear(a, v, o, r_out)?;
    let s = o.zip_map(r_out, |ov, r| r / stabilize(ov, eps))?;
    let rv = v.zip_map(&matmul(&a.transpose(0, 1)?, &s)?, |x, y| x * y)?;
    Ok((a.zeros_like(), rv))
}

fn check_bilinear(a: &Tensor, v: &Tensor, o: &Tensor, r: &Tensor) -> Result<()> {
    check(
        "bilinear_rule",
        a.rank() == 2
            && v.rank() == 2
            && a.shape()[1] == v.shape()[0]
            && o.shape() == [a.shape()[0], v.shape()[1]]
            && r.shape() == o.shape(),
        &[a.shape(), v.shape(), o.shape(), r.shape()],
    )
}

/// Softmax input relevance along `axis`: `x_i (R_i - s_i * sum_j R_j)`.
pub fn softmax_rule(x: &Tensor, s: &Tensor, r_out: &Tensor, axis: usize) -> Result<Tensor> {
    check(
        "softmax_rule",
        x.shape() == s.shape() && s.shape() == r_out.shape() && axis < x.rank(),
        &[x.shape(), s.shape(), r_out.shape()],
    )?;
    let (outer, n, inner) = axis_split(x.shape(), axis);
    let mut out = vec![0.0; x.numel()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let total: f64 = (0..n).map(|k| r_out.data()[at(k)]).sum();
            for k in 0..n {
                let j = at(k);
                out[j] = x.data()[j] * (r_out.data()[j] - s.data()[j] * total);
            }
        }
    }
    Ok(x.like(x.shape().to_vec(), out))
}

pub fn identity_rule(r_out: &Tensor) -> Tensor {
    r_out.clone()
}

/// Winner-take-all routing of pooled relevance onto the argmax positions.
pub fn maxpool_route(indices: &[usize], r_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    if indices.len() != r_out.numel() {
        return Err(LrpError::shape("maxpool_route", &[r_out.shape(), &[indices.len()]]));
    }
    let n: usize = input_shape.iter().product();
    let mut out = vec![0.0; n];
    for (&i, &r) in indices.iter().zip(r_out.data()) {
        if i >= n {
            return Err(LrpError::IndexOutOfRange { index: i, extent: n });
        }
        out[i] += r;
    }
    Ok(r_out.like(input_shape.to_vec(), out))
}

/// Layer-norm relevance with detached statistics. The normalized input `n`
/// and the shift `beta` share `R` in proportion to `n * gamma` and `beta`;
/// the `n` share passes to `x` unchanged. Returns `[R_x, R_gamma, R_beta]`
/// with `R_gamma` zero and `R_beta` summed over rows.
pub fn layernorm_rule(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    norm_eps: f64,
    r_out: &Tensor,
    eps: f64,
) -> Result<Vec<Tensor>> {
    let (y, mean, rstd) = kernels::layer_norm_forward(x, gamma, beta, norm_eps)?;
    check("layernorm_rule", r_out.shape() == y.shape(), &[y.shape(), r_out.shape()])?;
    let d = gamma.numel();
    let mut rx = vec![0.0; x.numel()];
    let mut rb = vec![0.0; d];
    for r in 0..x.numel() / d {
        for j in 0..d {
            let i = r * d + j;
            let n = (x.data()[i] - mean[r]) * rstd[r];
            let s = r_out.data()[i] / stabilize(y.data()[i], eps);
            rx[i] = n * gamma.data()[j] * s;
            rb[j] += beta.data()[j] * s;
        }
    }
    Ok(vec![
        x.like(x.shape().to_vec(), rx),
        gamma.zeros_like(),
        beta.like(beta.shape().to_vec(), rb),
    ])
}

/// Relevance re-indexed exactly as the op's gradient would be. Covers shape
/// and selection ops, Cat/Stack/Unbind/Split, MaskedFill and Neg; none of
/// them needs forward values.
pub fn gradient_route_rule(node: &NodeRecord, r_out: &[Tensor]) -> Result<Vec<Tensor>> {
    let shapes = &node.input_shapes;
    let r = &r_out[0];
    let one = |t: Tensor| Ok(vec![t]);
    match node.kind {
        OpKind::View | OpKind::Reshape => one(r.reshape(&shapes[0])?),
        OpKind::Transpose => {
            let (a, b) = transpose_axes(&node.attrs)?;
            one(r.transpose(a, b)?)
        }
        OpKind::Permute => {
            let perm = node.attrs.axes.as_deref().unwrap_or(&[]);
            let mut inverse = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inverse[p] = i;
            }
            one(r.permute(&inverse)?)
        }
        OpKind::Expand => {
            let map = expand_map(&shapes[0], r.shape())?;
            let mut out = vec![0.0; shapes[0].iter().product()];
            for (&src, &v) in map.iter().zip(r.data()) {
                out[src] += v;
            }
            one(r.like(shapes[0].clone(), out))
        }
        OpKind::Slice => {
            let (axis, start, end) = slice_bounds(&node.attrs)?;
            let map = slice_map(&shapes[0], axis, start, end)?;
            let mut out = vec![0.0; shapes[0].iter().product()];
            for (&src, &v) in map.iter().zip(r.data()) {
                out[src] = v;
            }
            one(r.like(shapes[0].clone(), out))
        }
        OpKind::Cat => {
            let axis = node.attrs.axis.unwrap_or(0);
            let sizes: Vec<usize> = shapes.iter().map(|s| s[axis]).collect();
            kernels::split(r, axis, &sizes)
        }
        OpKind::Stack => {
            let axis = node.attrs.axis.unwrap_or(0);
            kernels::unbind(r, axis)?
                .iter()
                .zip(shapes)
                .map(|(t, s)| t.reshape(s))
                .collect()
        }
        OpKind::Unbind => {
            let refs: Vec<&Tensor> = r_out.iter().collect();
            one(kernels::stack(&refs, node.attrs.axis.unwrap_or(0))?)
        }
        OpKind::Split => {
            let refs: Vec<&Tensor> = r_out.iter().collect();
            one(kernels::cat(&refs, node.attrs.axis.unwrap_or(0))?)
        }
        OpKind::MaskedFill => {
            let mask = masked_fill_mask(r.numel(), &node.attrs)?;
            let data = r.data().iter().zip(mask).map(|(&v, &m)| if m { 0.0 } else { v }).collect();
            one(r.like(r.shape().to_vec(), data))
        }
        OpKind::Neg => one(identity_rule(r)),
        _ => Err(LrpError::UnsupportedKind {
            kind: node.kind.name().into(),
        }),
    }
}

/// Whether the rule for `kind` reads forward argument values.
pub fn needs_values(kind: &OpKind, cfg: &RuleConfig) -> bool {
    match kind {
        OpKind::Add
        | OpKind::Sub
        | OpKind::Sum
        | OpKind::Mean
        | OpKind::Mul
        | OpKind::Div
        | OpKind::MatMul
        | OpKind::Bmm
        | OpKind::Linear
        | OpKind::Conv2d
        | OpKind::MaxPool2d
        | OpKind::LayerNorm => true,
        OpKind::Softmax => cfg.softmax_mode == SoftmaxMode::Attnlrp,
        _ => false,
    }
}

fn values<'a>(node: &NodeRecord, inputs: Option<&'a [Tensor]>) -> Result<&'a [Tensor]> {
    inputs.ok_or_else(|| LrpError::MissingValue {
        node: node.id,
        what: "forward arguments".into(),
    })
}

/// Output of a dense layer, split into input and bias relevance.
fn dense_rule(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    r: &Tensor,
    gamma: f64,
    eps: f64,
) -> Result<(Tensor, Option<Tensor>)> {
    // The bias acts as one more weight on a constant unit input, boosted the
    // same way, so it both enters the denominator and keeps its share.
    let boost = |t: &Tensor| t.map(|v| v + gamma * v.max(0.0));
    let (w, b) = if gamma > 0.0 {
        (boost(w), b.map(boost))
    } else {
        (w.clone(), b.cloned())
    };
    let (w, b) = (&w, b.as_ref());
    let z = kernels::linear(x, w, b)?;
    let rx = epsilon_rule(x, w, &z, r, eps)?;
    let rb = match b {
        Some(b) => {
            let cols = b.numel();
            let mut acc = vec![0.0; cols];
            for (i, (&zv, &rv)) in z.data().iter().zip(r.data()).enumerate() {
                acc[i % cols] += b.data()[i % cols] * rv / stabilize(zv, eps);
            }
            Some(b.like(b.shape().to_vec(), acc))
        }
        None => None,
    };
    Ok((rx, rb))
}

/// Matrix product relevance for one `(m, k) x (k, n)` pair.
fn matmul_pair(
    a: &Tensor,
    b: &Tensor,
    r: &Tensor,
    a_param: bool,
    b_param: bool,
    cfg: &RuleConfig,
) -> Result<(Tensor, Tensor)> {
    let eps = cfg.epsilon;
    if b_param && !a_param {
        let (ra, _) = dense_rule(a, b, None, r, cfg.gamma_linear, eps)?;
        Ok((ra, b.zeros_like()))
    } else if a_param && !b_param {
        let (rbt, _) = dense_rule(
            &b.transpose(0, 1)?,
            &a.transpose(0, 1)?,
            None,
            &r.transpose(0, 1)?,
            cfg.gamma_linear,
            eps,
        )?;
        Ok((a.zeros_like(), rbt.transpose(0, 1)?))
    } else {
        let o = matmul(a, b)?;
        if cfg.bilinear_enabled {
            bilinear_rule(a, b, &o, r, eps)
        } else {
            value_path_rule(a, b, &o, r, eps)
        }
    }
}

fn batch(t: &Tensor, i: usize) -> Tensor {
    let (m, n) = (t.shape()[1], t.shape()[2]);
    t.like(vec![m, n], t.data()[i * m * n..(i + 1) * m * n].to_vec())
}

/// Relevance for each forward argument of `node`, given the relevance of each
/// of its outputs. `inputs` holds the forward arguments when the rule needs
/// them (see [`needs_values`]).
pub fn apply_rule(
    node: &NodeRecord,
    cfg: &RuleConfig,
    inputs: Option<&[Tensor]>,
    r_out: &[Tensor],
) -> Result<Vec<Tensor>> {
    let eps = cfg.epsilon;
    if r_out.len() != node.num_outputs() {
        return Err(LrpError::Arity {
            kind: node.kind.name().into(),
            expected: node.num_outputs(),
            got: r_out.len(),
        });
    }
    let r = &r_out[0];
    match &node.kind {
        OpKind::Input | OpKind::Parameter => Ok(Vec::new()),
        OpKind::Relu | OpKind::Gelu | OpKind::Silu => Ok(vec![identity_rule(r)]),
        OpKind::Add | OpKind::Sub => {
            let v = values(node, inputs)?;
            abs_ratio_rule(&[&v[0], &v[1]], r)
        }
        OpKind::Sum | OpKind::Mean => {
            let x = &values(node, inputs)?[0];
            Ok(vec![group_abs_ratio(x, node.attrs.axis, r)?])
        }
        OpKind::Mul => {
            let v = values(node, inputs)?;
            let z = kernels::elementwise("Mul", &v[0], &v[1], |a, b| a * b)?;
            let share = |denom_scale: f64| z.zip_map(r, |zv, rv| zv * rv / stabilize(denom_scale * zv, eps));
            let (pa, pb) = (node.input_is_param[0], node.input_is_param[1]);
            if pa != pb {
                let full = share(1.0)?;
                let (ra, rb) = if pb {
                    (full.reduce_to(v[0].shape())?, v[1].zeros_like())
                } else {
                    (v[0].zeros_like(), full.reduce_to(v[1].shape())?)
                };
                Ok(vec![ra, rb])
            } else {
                let half = share(2.0)?;
                Ok(vec![half.reduce_to(v[0].shape())?, half.reduce_to(v[1].shape())?])
            }
        }
        OpKind::Div => {
            let v = values(node, inputs)?;
            let z = kernels::elementwise("Div", &v[0], &v[1], |a, b| a / b)?;
            let ra = z.zip_map(r, |zv, rv| zv * rv / stabilize(zv, eps))?.reduce_to(v[0].shape())?;
            Ok(vec![ra, v[1].zeros_like()])
        }
        OpKind::MatMul => {
            let v = values(node, inputs)?;
            let (ra, rb) = matmul_pair(&v[0], &v[1], r, node.input_is_param[0], node.input_is_param[1], cfg)?;
            Ok(vec![ra, rb])
        }
        OpKind::Bmm => {
            let v = values(node, inputs)?;
            let (mut ra, mut rb) = (Vec::new(), Vec::new());
            for i in 0..v[0].shape()[0] {
                let (x, y) = matmul_pair(
                    &batch(&v[0], i),
                    &batch(&v[1], i),
                    &batch(r, i),
                    node.input_is_param[0],
                    node.input_is_param[1],
                    cfg,
                )?;
                ra.extend(x.into_data());
                rb.extend(y.into_data());
            }
            Ok(vec![
                v[0].like(v[0].shape().to_vec(), ra),
                v[1].like(v[1].shape().to_vec(), rb),
            ])
        }
        OpKind::Linear => {
            let v = values(node, inputs)?;
            let (rx, rb) = dense_rule(&v[0], &v[1], v.get(2), r, cfg.gamma_linear, eps)?;
            let mut out = vec![rx, v[1].zeros_like()];
            out.extend(rb);
            Ok(out)
        }
        OpKind::Conv2d => {
            let v = values(node, inputs)?;
            let g = ConvGeom::new(&v[0], &v[1], &node.attrs)?;
            let patches = unfold(&v[0], &g);
            let wm = weight_matrix(&v[1], &g)?;
            let r_rows = nchw_to_rows(r, &g)?;
            let (rp, rb) = dense_rule(&patches, &wm, v.get(2), &r_rows, cfg.gamma_conv, eps)?;
            let mut out = vec![fold(&rp, &g), v[1].zeros_like()];
            out.extend(rb);
            debug_assert_eq!(rows_to_nchw(&r_rows, &g)?.shape(), r.shape());
            Ok(out)
        }
        OpKind::MaxPool2d => {
            let x = &values(node, inputs)?[0];
            let (_, idx) = kernels::maxpool2d_forward(x, &node.attrs)?;
            Ok(vec![maxpool_route(&idx, r, x.shape())?])
        }
        OpKind::Softmax => match cfg.softmax_mode {
            SoftmaxMode::Skip => Ok(vec![r.zeros_like()]),
            SoftmaxMode::Attnlrp => {
                let x = &values(node, inputs)?[0];
                let axis = node.attrs.axis.unwrap_or(x.rank() - 1);
                let s = softmax_forward(x, axis)?;
                Ok(vec![softmax_rule(x, &s, r, axis)?])
            }
        },
        OpKind::LayerNorm => {
            let v = values(node, inputs)?;
            layernorm_rule(&v[0], &v[1], &v[2], node.attrs.epsilon.unwrap_or(1e-5), r, eps)
        }
        OpKind::Opaque(name) => Err(LrpError::UnsupportedNode {
            node: node.id,
            kind: name.clone(),
        }),
        _ => gradient_route_rule(node, r_out),
    }
}

/// Abs-ratio split for a reduction: each reduced group shares its output
/// relevance in proportion to `|x|`.
fn group_abs_ratio(x: &Tensor, axis: Option<usize>, r: &Tensor) -> Result<Tensor> {
    let (outer, n, inner) = match axis {
        Some(a) => axis_split(x.shape(), a),
        None => (1, x.numel(), 1),
    };
    check("abs_ratio_rule", r.numel() == outer * inner, &[x.shape(), r.shape()])?;
    let mut out = vec![0.0; x.numel()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let denom: f64 = (0..n).map(|k| libm::fabs(x.data()[at(k)])).sum();
            let rv = r.data()[o * inner + i];
            for k in 0..n {
                let frac = if denom == 0.0 {
                    1.0 / n as f64
                } else {
                    libm::fabs(x.data()[at(k)]) / denom
                };
                out[at(k)] = rv * frac;
            }
        }
    }
    Ok(x.like(x.shape().to_vec(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, d: &[f64]) -> Tensor {
        Tensor::matrix(r, c, d.to_vec()).unwrap()
    }

    fn v(d: &[f64]) -> Tensor {
        Tensor::from_vec(d.to_vec())
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn epsilon_examples() {
        let w = m(2, 1, &[1.0, -1.0]);
        let r = epsilon_rule(&v(&[1.0, 2.0]), &w, &v(&[-1.0]), &v(&[1.0]), 0.0).unwrap();
        assert_eq!(r.data(), &[-1.0, 2.0]);
        assert_eq!(r.sum(), 1.0);

        let r = epsilon_rule(&v(&[1.0, 2.0]), &w, &v(&[-1.0]), &v(&[0.0]), 1e-9).unwrap();
        assert_eq!(r.data(), &[0.0, 0.0]);

        let w = m(2, 1, &[1.0, 1.0]);
        let r = epsilon_rule(&v(&[1.0, 0.0]), &w, &v(&[1.0]), &v(&[5.0]), 0.0).unwrap();
        assert_eq!(r.data(), &[5.0, 0.0]);
    }

    #[test]
    fn gamma_examples() {
        let r = gamma_rule(&v(&[1.0, 1.0]), &m(2, 1, &[2.0, -1.0]), &v(&[1.0]), 1.0, 0.0).unwrap();
        assert!(close(r.data(), &[4.0 / 3.0, -1.0 / 3.0], 1e-15));

        let x = v(&[0.3, -1.2, 2.0]);
        let w = m(3, 2, &[-1.0, -0.5, -2.0, -0.1, -0.3, -4.0]);
        let r = v(&[1.0, -2.0]);
        let a = gamma_rule(&x, &w, &r, 7.0, 1e-9).unwrap();
        let b = gamma_rule(&x, &w, &r, 0.0, 1e-9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn abs_ratio_examples() {
        let r = abs_ratio_rule(&[&v(&[1.0]), &v(&[-3.0])], &v(&[4.0])).unwrap();
        assert_eq!((r[0].data()[0], r[1].data()[0]), (1.0, 3.0));

        let r = abs_ratio_rule(&[&v(&[2.0]), &v(&[2.0])], &v(&[3.0])).unwrap();
        assert_eq!((r[0].data()[0], r[1].data()[0]), (1.5, 1.5));

        let r = abs_ratio_rule(&[&v(&[0.0]), &v(&[0.0])], &v(&[1.0])).unwrap();
        assert_eq!((r[0].data()[0], r[1].data()[0]), (0.5, 0.5));
    }

    #[test]
    fn abs_ratio_broadcast_reduces() {
        let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = v(&[1.0, 2.0]);
        let r = m(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let out = abs_ratio_rule(&[&a, &b], &r).unwrap();
        assert_eq!(out[1].shape(), &[2]);
        assert!((out[0].sum() + out[1].sum() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn bilinear_examples() {
        let (ra, rv) = bilinear_rule(&m(1, 1, &[2.0]), &m(1, 1, &[3.0]), &m(1, 1, &[6.0]), &m(1, 1, &[1.0]), 0.0).unwrap();
        assert_eq!((ra.data()[0], rv.data()[0]), (0.5, 0.5));

        let a = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let vv = m(2, 3, &[0.5, -1.0, 2.0, 3.0, 0.25, -0.7]);
        let r = m(2, 3, &[1.0, 2.0, -1.0, 0.5, 0.3, 4.0]);
        let (ra, rv) = bilinear_rule(&a, &vv, &vv, &r, 0.0).unwrap();
        assert!((ra.sum() - r.sum() / 2.0).abs() < 1e-12);
        assert!(close(rv.data(), r.scale(0.5).data(), 1e-12));

        let (ra, rv) = bilinear_rule(&a, &vv, &vv, &r.zeros_like(), 1e-9).unwrap();
        assert_eq!(ra.sum().abs() + rv.sum().abs(), 0.0);
    }

    #[test]
    fn softmax_examples() {
        let r = softmax_rule(&v(&[0.0, 0.0]), &v(&[0.5, 0.5]), &v(&[1.0, 3.0]), 0).unwrap();
        assert_eq!(r.data(), &[0.0, 0.0]);

        let x = v(&[1.0, -1.0]);
        let s = softmax_forward(&x, 0).unwrap();
        let r = softmax_rule(&x, &s, &v(&[1.0, 0.0]), 0).unwrap();
        assert!(close(r.data(), &[0.1192, 0.1192], 1e-3));

        let r = softmax_rule(&v(&[2.5]), &v(&[1.0]), &v(&[3.0]), 0).unwrap();
        assert_eq!(r.data(), &[0.0]);
    }

    #[test]
    fn maxpool_route_examples() {
        let r = maxpool_route(&[3], &v(&[2.0]), &[2, 2]).unwrap();
        assert_eq!(r.data(), &[0.0, 0.0, 0.0, 2.0]);
        let r = maxpool_route(&[1, 2], &v(&[2.0, 5.0]), &[4]).unwrap();
        assert_eq!(r.data(), &[0.0, 2.0, 5.0, 0.0]);
        assert!(maxpool_route(&[9], &v(&[1.0]), &[4]).is_err());
    }

    #[test]
    fn layernorm_examples() {
        let x = m(1, 4, &[-1.5, -0.5, 0.5, 1.5]);
        // Scale the row to unit variance so normalization is the identity.
        let sd = (x.data().iter().map(|a| a * a).sum::<f64>() / 4.0).sqrt();
        let x = x.scale(1.0 / sd);
        let ones = Tensor::full(&[4], 1.0);
        let r = m(1, 4, &[0.1, -2.0, 3.0, 0.7]);
        let out = layernorm_rule(&x, &ones, &Tensor::zeros(&[4]), 0.0, &r, 1e-12).unwrap();
        assert!(close(out[0].data(), r.data(), 1e-9));

        let zero = layernorm_rule(&x, &ones, &ones, 0.0, &r.zeros_like(), 1e-9).unwrap();
        assert!(zero.iter().all(|t| t.sum() == 0.0));
    }
}
