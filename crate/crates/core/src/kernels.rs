//! Forward kernels for every supported op kind.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{LrpError, Result};
use crate::op::{OpAttrs, OpKind};
use crate::tensor::{broadcast_shape, numel, strides, Tensor};

/// `(outer, extent, inner)` split of `shape` around `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

/// Shape with `axis` removed; a rank-0 result becomes `[1]`.
pub(crate) fn drop_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

fn check_axis(op: &str, axis: usize, rank: usize) -> Result<()> {
    if axis >= rank {
        return Err(LrpError::attr(op, &format!("axis {axis} out of range for rank {rank}")));
    }
    Ok(())
}

fn arity(kind: &OpKind, inputs: &[&Tensor], allowed: &[usize]) -> Result<()> {
    if allowed.contains(&inputs.len()) {
        Ok(())
    } else {
        Err(LrpError::Arity {
            kind: kind.name().into(),
            expected: allowed[0],
            got: inputs.len(),
        })
    }
}

pub fn elementwise(
    op: &str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let shape =
        broadcast_shape(a.shape(), b.shape()).ok_or_else(|| LrpError::shape(op, &[a.shape(), b.shape()]))?;
    let (na, nb) = (a.numel(), b.numel());
    let data = (0..numel(&shape))
        .map(|i| f(a.data()[i % na], b.data()[i % nb]))
        .collect();
    Ok(a.like(shape, data))
}

/// `a (m×k) · b (k×n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(LrpError::shape("MatMul", &[a.shape(), b.shape()]));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data()[i * k + p];
            if av == 0.0 {
                continue;
            }
            let row = &b.data()[p * n..(p + 1) * n];
            for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                *o += av * bv;
            }
        }
    }
    Ok(a.like(vec![m, n], out))
}

/// Batched matmul over the leading axis: `(B×m×k) · (B×k×n)`.
pub fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[1] {
        return Err(LrpError::shape("Bmm", &[a.shape(), b.shape()]));
    }
    let (bs, m, k, n) = (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2]);
    let mut out = Vec::with_capacity(bs * m * n);
    for i in 0..bs {
        let ai = a.like(vec![m, k], a.data()[i * m * k..(i + 1) * m * k].to_vec());
        let bi = b.like(vec![k, n], b.data()[i * k * n..(i + 1) * k * n].to_vec());
        out.extend(matmul(&ai, &bi)?.into_data());
    }
    Ok(a.like(vec![bs, m, n], out))
}

/// Flattens every leading axis: `(.., d)` → `(rows, d)`.
pub(crate) fn as_rows(t: &Tensor) -> Result<Tensor> {
    let d = *t.shape().last().unwrap();
    t.reshape(&[t.numel() / d, d])
}

/// `x (.., in) · W (in × out) + b`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    if w.rank() != 2 || *x.shape().last().unwrap() != w.shape()[0] {
        return Err(LrpError::shape("Linear", &[x.shape(), w.shape()]));
    }
    let z = matmul(&as_rows(x)?, w)?;
    let z = match b {
        Some(b) => {
            if b.shape() != [w.shape()[1]] {
                return Err(LrpError::shape("Linear", &[w.shape(), b.shape()]));
            }
            elementwise("Linear", &z, b, |a, c| a + c)?
        }
        None => z,
    };
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = w.shape()[1];
    z.reshape(&shape)
}

/// Numerically stable softmax along `axis`.
pub fn softmax_forward(x: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("Softmax", axis, x.rank())?;
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(LrpError::NonFinite { op: "Softmax".into() });
    }
    let (outer, n, inner) = axis_split(x.shape(), axis);
    let mut out = vec![0.0; x.numel()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| x.data()[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..n {
                let e = libm::exp(x.data()[at(k)] - max);
                out[at(k)] = e;
                total += e;
            }
            for k in 0..n {
                out[at(k)] /= total;
            }
        }
    }
    Ok(x.like(x.shape().to_vec(), out))
}

pub fn gelu(v: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * v * (1.0 + libm::tanh(C * (v + 0.044715 * v * v * v)))
}

pub fn silu(v: f64) -> f64 {
    v / (1.0 + libm::exp(-v))
}

/// Geometry of a 2-D convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &Tensor, w: &Tensor, attrs: &OpAttrs) -> Result<Self> {
        if x.rank() != 4 || w.rank() != 4 || x.shape()[1] != w.shape()[1] {
            return Err(LrpError::shape("Conv2d", &[x.shape(), w.shape()]));
        }
        let stride = attrs.stride.unwrap_or(1);
        let pad = attrs.padding.unwrap_or(0);
        if stride == 0 {
            return Err(LrpError::attr("Conv2d", "stride must be positive"));
        }
        let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (o, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(LrpError::shape("Conv2d", &[x.shape(), w.shape()]));
        }
        Ok(ConvGeom {
            n,
            c,
            h,
            w: wd,
            o,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// Source index in `x` for patch row `r`, patch column `col`; `None` in padding.
    fn source(&self, r: usize, col: usize) -> Option<usize> {
        let (n, rest) = (r / (self.ho * self.wo), r % (self.ho * self.wo));
        let (oy, ox) = (rest / self.wo, rest % self.wo);
        let (c, k) = (col / (self.kh * self.kw), col % (self.kh * self.kw));
        let (ky, kx) = (k / self.kw, k % self.kw);
        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
        if iy < 0 || ix < 0 || iy as usize >= self.h || ix as usize >= self.w {
            return None;
        }
        Some(((n * self.c + c) * self.h + iy as usize) * self.w + ix as usize)
    }
}

/// im2col: `(N·Ho·Wo) × (C·kh·kw)` patch matrix.
pub(crate) fn unfold(x: &Tensor, g: &ConvGeom) -> Tensor {
    let rows = g.n * g.ho * g.wo;
    let cols = g.patch_len();
    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        for col in 0..cols {
            if let Some(src) = g.source(r, col) {
                data[r * cols + col] = x.data()[src];
            }
        }
    }
    x.like(vec![rows, cols], data)
}

/// col2im: scatter-adds a patch-shaped tensor back onto the input layout.
pub(crate) fn fold(patches: &Tensor, g: &ConvGeom) -> Tensor {
    let cols = g.patch_len();
    let mut data = vec![0.0; g.n * g.c * g.h * g.w];
    for (i, v) in patches.data().iter().enumerate() {
        if let Some(src) = g.source(i / cols, i % cols) {
            data[src] += v;
        }
    }
    patches.like(vec![g.n, g.c, g.h, g.w], data)
}

/// Weight as a `(C·kh·kw) × O` matrix.
pub(crate) fn weight_matrix(w: &Tensor, g: &ConvGeom) -> Result<Tensor> {
    w.reshape(&[g.o, g.patch_len()])?.transpose(0, 1)
}

/// `(N·Ho·Wo) × O` rows back to NCHW.
pub(crate) fn rows_to_nchw(t: &Tensor, g: &ConvGeom) -> Result<Tensor> {
    t.reshape(&[g.n, g.ho, g.wo, g.o])?.permute(&[0, 3, 1, 2])
}

pub(crate) fn nchw_to_rows(t: &Tensor, g: &ConvGeom) -> Result<Tensor> {
    t.permute(&[0, 2, 3, 1])?.reshape(&[g.n * g.ho * g.wo, g.o])
}

/// Direct cross-correlation, NCHW input and OIKK weight.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, attrs: &OpAttrs) -> Result<Tensor> {
    let g = ConvGeom::new(x, w, attrs)?;
    if let Some(b) = b {
        if b.shape() != [g.o] {
            return Err(LrpError::shape("Conv2d", &[w.shape(), b.shape()]));
        }
    }
    let mut out = vec![0.0; g.n * g.o * g.ho * g.wo];
    for n in 0..g.n {
        for o in 0..g.o {
            let bias = b.map_or(0.0, |b| b.data()[o]);
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut acc = bias;
                    for c in 0..g.c {
                        for ky in 0..g.kh {
                            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                            if iy < 0 || iy as usize >= g.h {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if ix < 0 || ix as usize >= g.w {
                                    continue;
                                }
                                let xv = x.data()[((n * g.c + c) * g.h + iy as usize) * g.w + ix as usize];
                                let wv = w.data()[((o * g.c + c) * g.kh + ky) * g.kw + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((n * g.o + o) * g.ho + oy) * g.wo + ox] = acc;
                }
            }
        }
    }
    Ok(x.like(vec![g.n, g.o, g.ho, g.wo], out))
}

/// Max pooling over the last two axes. Returns pooled values and the flat
/// input index of each window's winner; ties go to the lowest row-major index.
pub fn maxpool2d_forward(x: &Tensor, attrs: &OpAttrs) -> Result<(Tensor, Vec<usize>)> {
    if x.rank() < 2 {
        return Err(LrpError::shape("MaxPool2d", &[x.shape()]));
    }
    let k = attrs.kernel.ok_or_else(|| LrpError::attr("MaxPool2d", "kernel required"))?;
    let s = attrs.stride.unwrap_or(k);
    if k == 0 || s == 0 {
        return Err(LrpError::attr("MaxPool2d", "kernel and stride must be positive"));
    }
    let r = x.rank();
    let (h, w) = (x.shape()[r - 2], x.shape()[r - 1]);
    if k > h || k > w {
        return Err(LrpError::attr("MaxPool2d", "window larger than input"));
    }
    let (ho, wo) = ((h - k) / s + 1, (w - k) / s + 1);
    let planes = x.numel() / (h * w);
    let mut vals = Vec::with_capacity(planes * ho * wo);
    let mut idx = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = usize::MAX;
                for ky in 0..k {
                    for kx in 0..k {
                        let i = p * h * w + (oy * s + ky) * w + ox * s + kx;
                        if best == usize::MAX || x.data()[i] > x.data()[best] {
                            best = i;
                        }
                    }
                }
                vals.push(x.data()[best]);
                idx.push(best);
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[r - 2] = ho;
    shape[r - 1] = wo;
    Ok((x.like(shape, vals), idx))
}

/// Layer normalization over the last axis. Returns `(y, mean, rstd)` with one
/// statistic per row.
pub fn layer_norm_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let d = *x.shape().last().unwrap();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(LrpError::shape("LayerNorm", &[x.shape(), gamma.shape(), beta.shape()]));
    }
    let rows = x.numel() / d;
    let mut out = vec![0.0; x.numel()];
    let (mut means, mut rstds) = (Vec::with_capacity(rows), Vec::with_capacity(rows));
    for r in 0..rows {
        let row = &x.data()[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rstd = 1.0 / libm::sqrt(var + eps);
        for j in 0..d {
            out[r * d + j] = (row[j] - mean) * rstd * gamma.data()[j] + beta.data()[j];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    Ok((x.like(x.shape().to_vec(), out), means, rstds))
}

fn reduce_axis(x: &Tensor, axis: Option<usize>, mean: bool, op: &str) -> Result<Tensor> {
    match axis {
        None => {
            let s = x.sum();
            let v = if mean { s / x.numel() as f64 } else { s };
            Ok(x.like(vec![1], vec![v]))
        }
        Some(axis) => {
            check_axis(op, axis, x.rank())?;
            let (outer, n, inner) = axis_split(x.shape(), axis);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for k in 0..n {
                    for i in 0..inner {
                        out[o * inner + i] += x.data()[(o * n + k) * inner + i];
                    }
                }
            }
            if mean {
                out.iter_mut().for_each(|v| *v /= n as f64);
            }
            Ok(x.like(drop_axis(x.shape(), axis), out))
        }
    }
}

/// Concatenates along `axis`; all other extents must agree.
pub fn cat(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = inputs[0];
    check_axis("Cat", axis, first.rank())?;
    for t in inputs {
        let ok = t.rank() == first.rank()
            && t.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(LrpError::shape("Cat", &[first.shape(), t.shape()]));
        }
    }
    let (outer, _, inner) = axis_split(first.shape(), axis);
    let total: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for t in inputs {
            let n = t.shape()[axis];
            data.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(first.like(shape, data))
}

/// Splits along `axis` into pieces of the given extents.
pub fn split(x: &Tensor, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>> {
    check_axis("Split", axis, x.rank())?;
    if sizes.iter().sum::<usize>() != x.shape()[axis] || sizes.contains(&0) {
        return Err(LrpError::attr("Split", "sizes must be positive and sum to the axis extent"));
    }
    let (outer, n, inner) = axis_split(x.shape(), axis);
    let mut offset = 0;
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut data = Vec::with_capacity(outer * size * inner);
        for o in 0..outer {
            let base = (o * n + offset) * inner;
            data.extend_from_slice(&x.data()[base..base + size * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = size;
        out.push(x.like(shape, data));
        offset += size;
    }
    Ok(out)
}

pub fn stack(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = inputs[0];
    if axis > first.rank() {
        return Err(LrpError::attr("Stack", "axis out of range"));
    }
    let mut unsq = first.shape().to_vec();
    unsq.insert(axis, 1);
    let parts: Vec<Tensor> = inputs
        .iter()
        .map(|t| {
            if t.shape() != first.shape() {
                return Err(LrpError::shape("Stack", &[first.shape(), t.shape()]));
            }
            t.reshape(&unsq)
        })
        .collect::<Result<_>>()?;
    cat(&parts.iter().collect::<Vec<_>>(), axis)
}

pub fn unbind(x: &Tensor, axis: usize) -> Result<Vec<Tensor>> {
    check_axis("Unbind", axis, x.rank())?;
    let pieces = split(x, axis, &vec![1; x.shape()[axis]])?;
    let shape = drop_axis(x.shape(), axis);
    pieces.iter().map(|p| p.reshape(&shape)).collect()
}

/// Right-aligned expansion: every input extent equals the target extent or is 1.
pub fn expand(x: &Tensor, target: &[usize]) -> Result<Tensor> {
    let map = expand_map(x.shape(), target)?;
    Ok(x.like(target.to_vec(), map.iter().map(|&i| x.data()[i]).collect()))
}

/// For each element of the expanded tensor, the source index in the input.
pub(crate) fn expand_map(src: &[usize], target: &[usize]) -> Result<Vec<usize>> {
    if src.len() > target.len() {
        return Err(LrpError::shape("Expand", &[src, target]));
    }
    let lead = target.len() - src.len();
    for (i, &s) in src.iter().enumerate() {
        if s != 1 && s != target[lead + i] {
            return Err(LrpError::shape("Expand", &[src, target]));
        }
    }
    let src_strides = strides(src);
    let mut idx = vec![0usize; target.len()];
    let mut map = Vec::with_capacity(numel(target));
    for _ in 0..numel(target) {
        let mut s = 0;
        for (i, &st) in src_strides.iter().enumerate() {
            if src[i] != 1 {
                s += idx[lead + i] * st;
            }
        }
        map.push(s);
        for ax in (0..target.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < target[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    Ok(map)
}

/// Flat input indices selected by a slice along one axis.
pub(crate) fn slice_map(shape: &[usize], axis: usize, start: usize, end: usize) -> Result<Vec<usize>> {
    check_axis("Slice", axis, shape.len())?;
    if start >= end || end > shape[axis] {
        return Err(LrpError::attr("Slice", "need start < end <= extent"));
    }
    let (outer, n, inner) = axis_split(shape, axis);
    let mut map = Vec::with_capacity(outer * (end - start) * inner);
    for o in 0..outer {
        for k in start..end {
            for i in 0..inner {
                map.push((o * n + k) * inner + i);
            }
        }
    }
    Ok(map)
}

pub(crate) fn slice_bounds(attrs: &OpAttrs) -> Result<(usize, usize, usize)> {
    match (attrs.axis, attrs.start, attrs.end) {
        (Some(a), Some(s), Some(e)) => Ok((a, s, e)),
        _ => Err(LrpError::attr("Slice", "axis, start and end required")),
    }
}

pub(crate) fn transpose_axes(attrs: &OpAttrs) -> Result<(usize, usize)> {
    match attrs.axes.as_deref() {
        Some([a, b]) => Ok((*a, *b)),
        _ => Err(LrpError::attr("Transpose", "needs exactly two axes")),
    }
}

fn required_shape<'a>(attrs: &'a OpAttrs, op: &str) -> Result<&'a [usize]> {
    attrs.shape.as_deref().ok_or_else(|| LrpError::attr(op, "target shape required"))
}

pub(crate) fn masked_fill_mask<'a>(x_len: usize, attrs: &'a OpAttrs) -> Result<&'a [bool]> {
    let mask = attrs.mask.as_deref().ok_or_else(|| LrpError::attr("MaskedFill", "mask required"))?;
    if mask.len() != x_len {
        return Err(LrpError::attr("MaskedFill", "mask length must equal the element count"));
    }
    Ok(mask)
}

/// Evaluates one op. Multi-output kinds (Unbind, Split) return one tensor per
/// output; everything else returns a single tensor.
pub fn forward_eval(kind: &OpKind, inputs: &[&Tensor], attrs: &OpAttrs) -> Result<Vec<Tensor>> {
    let one = |t: Tensor| Ok(vec![t]);
    match kind {
        OpKind::Input | OpKind::Parameter => {
            arity(kind, inputs, &[1])?;
            one(inputs[0].clone())
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            arity(kind, inputs, &[2])?;
            let f: fn(f64, f64) -> f64 = match kind {
                OpKind::Add => |a, b| a + b,
                OpKind::Sub => |a, b| a - b,
                OpKind::Mul => |a, b| a * b,
                _ => |a, b| a / b,
            };
            one(elementwise(kind.name(), inputs[0], inputs[1], f)?)
        }
        OpKind::Neg => {
            arity(kind, inputs, &[1])?;
            one(inputs[0].map(|v| -v))
        }
        OpKind::MatMul => {
            arity(kind, inputs, &[2])?;
            one(matmul(inputs[0], inputs[1])?)
        }
        OpKind::Bmm => {
            arity(kind, inputs, &[2])?;
            one(bmm(inputs[0], inputs[1])?)
        }
        OpKind::Linear => {
            arity(kind, inputs, &[2, 3])?;
            one(linear(inputs[0], inputs[1], inputs.get(2).copied())?)
        }
        OpKind::Conv2d => {
            arity(kind, inputs, &[2, 3])?;
            one(conv2d_forward(inputs[0], inputs[1], inputs.get(2).copied(), attrs)?)
        }
        OpKind::MaxPool2d => {
            arity(kind, inputs, &[1])?;
            one(maxpool2d_forward(inputs[0], attrs)?.0)
        }
        OpKind::Sum | OpKind::Mean => {
            arity(kind, inputs, &[1])?;
            one(reduce_axis(inputs[0], attrs.axis, *kind == OpKind::Mean, kind.name())?)
        }
        OpKind::Cat | OpKind::Stack => {
            if inputs.is_empty() {
                return Err(LrpError::Arity {
                    kind: kind.name().into(),
                    expected: 1,
                    got: 0,
                });
            }
            let axis = attrs.axis.unwrap_or(0);
            if *kind == OpKind::Cat {
                one(cat(inputs, axis)?)
            } else {
                one(stack(inputs, axis)?)
            }
        }
        OpKind::Unbind => {
            arity(kind, inputs, &[1])?;
            unbind(inputs[0], attrs.axis.unwrap_or(0))
        }
        OpKind::Split => {
            arity(kind, inputs, &[1])?;
            let sizes = attrs
                .split_sizes
                .as_deref()
                .ok_or_else(|| LrpError::attr("Split", "split sizes required"))?;
            split(inputs[0], attrs.axis.unwrap_or(0), sizes)
        }
        OpKind::View | OpKind::Reshape => {
            arity(kind, inputs, &[1])?;
            one(inputs[0].reshape(required_shape(attrs, kind.name())?)?)
        }
        OpKind::Transpose => {
            arity(kind, inputs, &[1])?;
            let (a, b) = transpose_axes(attrs)?;
            one(inputs[0].transpose(a, b)?)
        }
        OpKind::Permute => {
            arity(kind, inputs, &[1])?;
            let perm = attrs.axes.as_deref().ok_or_else(|| LrpError::attr("Permute", "axes required"))?;
            one(inputs[0].permute(perm)?)
        }
        OpKind::Expand => {
            arity(kind, inputs, &[1])?;
            one(expand(inputs[0], required_shape(attrs, "Expand")?)?)
        }
        OpKind::Slice => {
            arity(kind, inputs, &[1])?;
            let x = inputs[0];
            let (axis, start, end) = slice_bounds(attrs)?;
            let map = slice_map(x.shape(), axis, start, end)?;
            let mut shape = x.shape().to_vec();
            shape[axis] = end - start;
            one(x.like(shape, map.iter().map(|&i| x.data()[i]).collect()))
        }
        OpKind::Relu => {
            arity(kind, inputs, &[1])?;
            one(inputs[0].map(|v| if v > 0.0 { v } else { 0.0 }))
        }
        OpKind::Gelu => {
            arity(kind, inputs, &[1])?;
            one(inputs[0].map(gelu))
        }
        OpKind::Silu => {
            arity(kind, inputs, &[1])?;
            one(inputs[0].map(silu))
        }
        OpKind::MaskedFill => {
            arity(kind, inputs, &[1])?;
            let x = inputs[0];
            let mask = masked_fill_mask(x.numel(), attrs)?;
            let fill = attrs.fill_value.unwrap_or(0.0);
            let data = x.data().iter().zip(mask).map(|(&v, &m)| if m { fill } else { v }).collect();
            one(x.like(x.shape().to_vec(), data))
        }
        OpKind::Softmax => {
            arity(kind, inputs, &[1])?;
            let axis = attrs.axis.unwrap_or(inputs[0].rank() - 1);
            one(softmax_forward(inputs[0], axis)?)
        }
        OpKind::LayerNorm => {
            arity(kind, inputs, &[3])?;
            let eps = attrs.epsilon.unwrap_or(1e-5);
            one(layer_norm_forward(inputs[0], inputs[1], inputs[2], eps)?.0)
        }
        OpKind::Opaque(name) => Err(LrpError::UnsupportedKind { kind: name.clone() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn eval1(kind: OpKind, inputs: &[&Tensor], attrs: &OpAttrs) -> Tensor {
        forward_eval(&kind, inputs, attrs).unwrap().remove(0)
    }

    #[test]
    fn add_elementwise() {
        let out = eval1(OpKind::Add, &[&Tensor::from_vec(vec![1.0, 2.0]), &Tensor::from_vec(vec![3.0, 4.0])], &OpAttrs::none());
        assert_eq!(out.data(), &[4.0, 6.0]);
    }

    #[test]
    fn matmul_by_hand() {
        let out = eval1(OpKind::MatMul, &[&t(&[1, 2], &[1.0, 2.0]), &t(&[2, 1], &[1.0, -1.0])], &OpAttrs::none());
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data(), &[-1.0]);
    }

    #[test]
    fn unbind_splits_shape() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let parts = forward_eval(&OpKind::Unbind, &[&x], &OpAttrs::axis(0)).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].shape(), &[3]);
        assert_eq!(parts[1].data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn shape_mismatch_names_kind() {
        let err = forward_eval(&OpKind::Add, &[&t(&[2, 3], &[0.0; 6]), &t(&[2], &[0.0; 2])], &OpAttrs::none()).unwrap_err();
        match err {
            LrpError::ShapeMismatch { op, shapes } => {
                assert_eq!(op, "Add");
                assert_eq!(shapes, vec![vec![2, 3], vec![2]]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn opaque_is_unsupported() {
        let x = Tensor::scalar(1.0);
        let err = forward_eval(&OpKind::Opaque("Foo".into()), &[&x], &OpAttrs::none()).unwrap_err();
        assert_eq!(err, LrpError::UnsupportedKind { kind: "Foo".into() });
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_forward(&Tensor::from_vec(vec![0.0, 0.0]), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_forward(&Tensor::from_vec(vec![1.0, -1.0]), 0).unwrap();
        // e / (e + 1/e) = 1 / (1 + e^-2)
        assert!((s.data()[0] - 0.8808).abs() < 1e-4);
        assert!((s.data()[1] - 0.1192).abs() < 1e-4);
        let s = softmax_forward(&Tensor::from_vec(vec![5.0]), 0).unwrap();
        assert_eq!(s.data(), &[1.0]);
        assert!(softmax_forward(&Tensor::from_vec(vec![f64::NAN, 1.0]), 0).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = t(&[3, 4], &[0.3, -2.0, 5.0, 1.0, 0.0, 0.0, 0.0, 0.0, 100.0, -100.0, 3.0, 2.0]);
        let s = softmax_forward(&x, 1).unwrap();
        for r in 0..3 {
            let total: f64 = s.data()[r * 4..(r + 1) * 4].iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_examples() {
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let ones = t(&[1, 1, 2, 2], &[1.0; 4]);
        assert_eq!(conv2d_forward(&x, &ones, None, &OpAttrs::none()).unwrap().data(), &[10.0]);

        let id = t(&[1, 1, 1, 1], &[1.0]);
        assert_eq!(conv2d_forward(&x, &id, None, &OpAttrs::none()).unwrap(), x);

        let zero = t(&[1, 1, 2, 2], &[0.0; 4]);
        assert_eq!(conv2d_forward(&x, &zero, None, &OpAttrs::none()).unwrap().data(), &[0.0]);

        let wrong = t(&[1, 2, 1, 1], &[1.0, 1.0]);
        assert!(conv2d_forward(&x, &wrong, None, &OpAttrs::none()).is_err());
    }

    #[test]
    fn maxpool_examples() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let (v, i) = maxpool2d_forward(&x, &OpAttrs::pool(2, 2)).unwrap();
        assert_eq!((v.data(), i.as_slice()), (&[4.0][..], &[3][..]));

        let x = t(&[2, 2], &[7.0; 4]);
        let (_, i) = maxpool2d_forward(&x, &OpAttrs::pool(2, 2)).unwrap();
        assert_eq!(i, vec![0]);

        let x = t(&[2, 2], &[-3.0, -1.0, -2.0, -4.0]);
        let (v, i) = maxpool2d_forward(&x, &OpAttrs::pool(2, 2)).unwrap();
        assert_eq!((v.data()[0], i[0]), (-1.0, 1));

        assert!(maxpool2d_forward(&x, &OpAttrs::pool(3, 1)).is_err());
    }

    #[test]
    fn split_cat_inverse() {
        let x = t(&[2, 5], &(0..10).map(f64::from).collect::<Vec<_>>());
        let parts = split(&x, 1, &[2, 3]).unwrap();
        assert_eq!(parts[0].data(), &[0.0, 1.0, 5.0, 6.0]);
        let back = cat(&parts.iter().collect::<Vec<_>>(), 1).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn expand_along_new_axis() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let e = expand(&x, &[3, 2]).unwrap();
        assert_eq!(e.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(expand(&x, &[2, 3]).is_err());
    }

    #[test]
    fn layer_norm_standardizes() {
        let x = t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let (y, mean, _) = layer_norm_forward(&x, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4]), 0.0).unwrap();
        assert_eq!(mean, vec![2.5]);
        assert!(y.sum().abs() < 1e-12);
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-12);
    }
}
