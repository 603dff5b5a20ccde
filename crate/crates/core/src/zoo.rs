//! Small seeded models.
//!
//! Parameters are drawn from a ChaCha8 stream seeded per model and scaled by
//! `1/sqrt(fan_in)`, so a given seed always yields the same weights and the
//! same recorded graph.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LrpError, Result};
use crate::graph::{GraphRecorder, NodeId, RecordedGraph};
use crate::op::{OpAttrs, OpKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Arch {
    Mlp { widths: Vec<usize> },
    Residual { width: usize, depth: usize, post_activation: bool },
    Attention { d_model: usize, heads: usize, seq: usize, gated: bool },
    Cnn { channels: usize, classes: usize },
    OpTour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub arch: Arch,
    pub seed: u64,
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    /// Name of an unsupported op spliced in right after the input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject: Option<String>,
}

/// Linear+ReLU stack over `widths` (input width first).
pub fn build_mlp(widths: &[usize], seed: u64) -> ModelSpec {
    assert!(widths.len() >= 2, "an MLP needs input and output widths");
    ModelSpec {
        name: "mlp".into(),
        arch: Arch::Mlp { widths: widths.to_vec() },
        seed,
        input_shape: vec![widths[0]],
        num_classes: *widths.last().expect("checked above"),
        inject: None,
    }
}

/// Input projection, `depth` skip blocks `h + L2(relu(L1(h)))`, and a
/// two-class head. With `post_activation` a ReLU follows the projection and
/// every skip sum.
pub fn build_residual_block(width: usize, depth: usize, seed: u64, post_activation: bool) -> ModelSpec {
    ModelSpec {
        name: "residual".into(),
        arch: Arch::Residual {
            width,
            depth,
            post_activation,
        },
        seed,
        input_shape: vec![width],
        num_classes: 2,
        inject: None,
    }
}

/// One causal self-attention block over a `[seq, d_model]` input with a
/// residual sum, LayerNorm, GELU, optional SiLU gate, mean pooling over the
/// sequence and a two-class head.
pub fn build_toy_attention(d_model: usize, heads: usize, seq: usize, seed: u64, gated: bool) -> ModelSpec {
    assert!(heads > 0 && d_model % heads == 0, "d_model must split evenly across heads");
    assert!(!gated || d_model % 2 == 0, "the gate halves d_model");
    ModelSpec {
        name: "toy_attention".into(),
        arch: Arch::Attention {
            d_model,
            heads,
            seq,
            gated,
        },
        seed,
        input_shape: vec![seq, d_model],
        num_classes: 2,
        inject: None,
    }
}

/// Input normalization, two 3x3 convolutions around a 2x2 max-pool, and a
/// linear head over an `[1, 1, 8, 8]` input.
pub fn build_toy_cnn(channels: usize, seed: u64) -> ModelSpec {
    ModelSpec {
        name: "toy_cnn".into(),
        arch: Arch::Cnn { channels, classes: 3 },
        seed,
        input_shape: vec![1, 1, 8, 8],
        num_classes: 3,
        inject: None,
    }
}

/// A graph touching the kinds the other models leave out: Sub, Div, Neg,
/// Slice, Expand, Stack, Split, Reshape, Sum and all three MatMul operand
/// patterns.
pub fn build_op_tour(seed: u64) -> ModelSpec {
    ModelSpec {
        name: "op_tour".into(),
        arch: Arch::OpTour,
        seed,
        input_shape: vec![2, 4],
        num_classes: 2,
        inject: None,
    }
}

impl ModelSpec {
    /// The four reference models at their default sizes.
    pub fn zoo(seed: u64) -> Vec<ModelSpec> {
        vec![
            build_mlp(&[6, 12, 8, 3], seed),
            build_residual_block(6, 2, seed, true),
            build_toy_attention(8, 2, 4, seed, true),
            build_toy_cnn(4, seed),
        ]
    }

    pub const NAMES: [&'static str; 5] = ["mlp", "residual", "toy_attention", "toy_cnn", "op_tour"];

    pub fn by_name(name: &str, seed: u64) -> Option<ModelSpec> {
        let mut zoo = Self::zoo(seed);
        zoo.push(build_op_tour(seed));
        zoo.into_iter().find(|m| m.name == name)
    }

    pub fn with_injected(mut self, kind: &str) -> Self {
        self.inject = Some(kind.to_string());
        self
    }

    /// Unit-Gaussian input drawn from `seed`.
    pub fn sample_input(&self, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.input_shape.iter().product();
        let data = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        Tensor::new(self.input_shape.clone(), data).expect("input shape is non-empty")
    }

    /// Runs the model on `input`, returning the output and the recording.
    pub fn run_forward(&self, input: &Tensor) -> Result<(Tensor, RecordedGraph)> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(LrpError::shape(&self.name, &[input.shape(), &self.input_shape]));
        }
        let mut b = Builder {
            rec: GraphRecorder::new(),
            rng: ChaCha8Rng::seed_from_u64(self.seed),
        };
        let mut x = b.rec.input(input.clone());
        if let Some(kind) = &self.inject {
            let value = input.clone();
            x = b.rec.record_opaque(kind, &[x.into()], value)?;
        }
        let out = match &self.arch {
            Arch::Mlp { widths } => mlp(&mut b, x, widths)?,
            Arch::Residual {
                width,
                depth,
                post_activation,
            } => residual(&mut b, x, *width, *depth, *post_activation)?,
            Arch::Attention {
                d_model,
                heads,
                seq,
                gated,
            } => attention(&mut b, x, *d_model, *heads, *seq, *gated)?,
            Arch::Cnn { channels, classes } => cnn(&mut b, x, *channels, *classes)?,
            Arch::OpTour => op_tour(&mut b, x)?,
        };
        let rg = b.rec.finish(out)?;
        let y = rg.shadow.outputs[out.0][0].clone();
        Ok((y, rg))
    }

    /// Target output at flat index `target` for `input`.
    pub fn score(&self, input: &Tensor, target: usize) -> Result<f64> {
        let (y, _) = self.run_forward(input)?;
        y.data().get(target).copied().ok_or(LrpError::IndexOutOfRange {
            index: target,
            extent: y.numel(),
        })
    }

    /// Index of the largest output for `input`.
    pub fn predict(&self, input: &Tensor) -> Result<usize> {
        let (y, _) = self.run_forward(input)?;
        Ok(argmax(y.data()))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct Builder {
    rec: GraphRecorder,
    rng: ChaCha8Rng,
}

impl Builder {
    fn gaussian(&mut self, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut self.rng))
            .collect();
        Tensor::new(shape.to_vec(), data).expect("positive extents")
    }

    fn param(&mut self, value: Tensor) -> NodeId {
        self.rec.parameter(value)
    }

    fn op(&mut self, kind: OpKind, inputs: &[NodeId], attrs: OpAttrs) -> Result<NodeId> {
        self.rec.op(kind, inputs, attrs)
    }

    fn linear(&mut self, x: NodeId, fan_in: usize, fan_out: usize) -> Result<NodeId> {
        let w = self.gaussian(&[fan_in, fan_out], 1.0 / libm::sqrt(fan_in as f64));
        let bias = self.gaussian(&[fan_out], 0.1);
        let (w, bias) = (self.param(w), self.param(bias));
        self.op(OpKind::Linear, &[x, w, bias], OpAttrs::none())
    }

    fn conv(&mut self, x: NodeId, c_in: usize, c_out: usize) -> Result<NodeId> {
        let w = self.gaussian(&[c_out, c_in, 3, 3], 1.0 / libm::sqrt((c_in * 9) as f64));
        let bias = self.gaussian(&[c_out], 0.1);
        let (w, bias) = (self.param(w), self.param(bias));
        self.op(OpKind::Conv2d, &[x, w, bias], OpAttrs::conv(1, 1))
    }

    fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.op(OpKind::Relu, &[x], OpAttrs::none())
    }
}

fn mlp(b: &mut Builder, x: NodeId, widths: &[usize]) -> Result<NodeId> {
    let mut h = x;
    for (i, pair) in widths.windows(2).enumerate() {
        h = b.linear(h, pair[0], pair[1])?;
        if i + 2 < widths.len() {
            h = b.relu(h)?;
        }
    }
    Ok(h)
}

fn residual(b: &mut Builder, x: NodeId, width: usize, depth: usize, post: bool) -> Result<NodeId> {
    let mut h = b.linear(x, width, width)?;
    if post {
        h = b.relu(h)?;
    }
    for _ in 0..depth {
        let l1 = b.linear(h, width, width)?;
        let a = b.relu(l1)?;
        let l2 = b.linear(a, width, width)?;
        let s = b.op(OpKind::Add, &[l2, h], OpAttrs::none())?;
        h = if post { b.relu(s)? } else { s };
    }
    b.linear(h, width, 2)
}

fn attention(b: &mut Builder, x: NodeId, d: usize, heads: usize, seq: usize, gated: bool) -> Result<NodeId> {
    let dh = d / heads;
    let qkv = b.linear(x, d, 3 * d)?;
    let qkv = b.op(OpKind::View, &[qkv], OpAttrs::shape(&[seq, 3, heads, dh]))?;
    let qkv = b.op(OpKind::Permute, &[qkv], OpAttrs::permute(&[1, 2, 0, 3]))?;
    let parts = b.op(OpKind::Unbind, &[qkv], OpAttrs::axis(0))?;
    let (q, k, v) = (parts.out(0), parts.out(1), parts.out(2));
    let kt = b.rec.record_op(OpKind::Transpose, &[k], OpAttrs::transpose(1, 2))?;
    let scores = b.rec.record_op(OpKind::Bmm, &[q, kt.into()], OpAttrs::none())?;
    let scale = b.param(Tensor::scalar(1.0 / libm::sqrt(dh as f64)));
    let scaled = b.op(OpKind::Mul, &[scores, scale], OpAttrs::none())?;
    let mask = (0..heads * seq * seq).map(|i| i % seq > (i / seq) % seq).collect();
    let masked = b.op(OpKind::MaskedFill, &[scaled], OpAttrs::masked_fill(mask, -1e9))?;
    let attn = b.op(OpKind::Softmax, &[masked], OpAttrs::axis(2))?;
    let o = b.rec.record_op(OpKind::Bmm, &[attn.into(), v], OpAttrs::none())?;
    let per_head = b.op(OpKind::Unbind, &[o], OpAttrs::axis(0))?;
    let edges: Vec<_> = (0..heads).map(|h| per_head.out(h)).collect();
    let merged = b.rec.record_op(OpKind::Cat, &edges, OpAttrs::axis(1))?;
    let r = b.op(OpKind::Add, &[merged, x], OpAttrs::none())?;
    let gamma = Tensor::full(&[d], 1.0).add(&b.gaussian(&[d], 0.1))?;
    let beta = b.gaussian(&[d], 0.1);
    let (gamma, beta) = (b.param(gamma), b.param(beta));
    let y = b.op(OpKind::LayerNorm, &[r, gamma, beta], OpAttrs::layer_norm(1e-5))?;
    let mut h = b.op(OpKind::Gelu, &[y], OpAttrs::none())?;
    let mut width = d;
    if gated {
        width = d / 2;
        let halves = b.op(OpKind::Split, &[h], OpAttrs::split(1, &[width, width]))?;
        let gate = b.rec.record_op(OpKind::Silu, &[halves.out(1)], OpAttrs::none())?;
        h = b.rec.record_op(OpKind::Mul, &[halves.out(0), gate.into()], OpAttrs::none())?;
    }
    let pooled = b.op(OpKind::Mean, &[h], OpAttrs::axis(0))?;
    b.linear(pooled, width, 2)
}

fn cnn(b: &mut Builder, x: NodeId, c: usize, classes: usize) -> Result<NodeId> {
    let mu = b.param(Tensor::scalar(0.25));
    let sigma = b.param(Tensor::scalar(1.5));
    let centered = b.op(OpKind::Sub, &[x, mu], OpAttrs::none())?;
    let xn = b.op(OpKind::Div, &[centered, sigma], OpAttrs::none())?;
    let h = b.conv(xn, 1, c)?;
    let h = b.relu(h)?;
    let h = b.op(OpKind::MaxPool2d, &[h], OpAttrs::pool(2, 2))?;
    let h = b.conv(h, c, c)?;
    let h = b.relu(h)?;
    let flat = b.op(OpKind::View, &[h], OpAttrs::shape(&[1, c * 16]))?;
    b.linear(flat, c * 16, classes)
}

fn op_tour(b: &mut Builder, x: NodeId) -> Result<NodeId> {
    let w1 = b.gaussian(&[4, 4], 0.5);
    let w1 = b.param(w1);
    let a = b.op(OpKind::MatMul, &[x, w1], OpAttrs::none())?;
    let n = b.op(OpKind::Neg, &[a], OpAttrs::none())?;
    let left = b.op(OpKind::Slice, &[n], OpAttrs::slice(1, 0, 2))?;
    let right = b.op(OpKind::Slice, &[n], OpAttrs::slice(1, 2, 4))?;
    let p = b.gaussian(&[2, 2], 0.7);
    let p = b.param(p);
    let d = b.op(OpKind::MatMul, &[p, left], OpAttrs::none())?;
    let c = b.gaussian(&[2], 0.5);
    let c = b.param(c);
    let ce = b.op(OpKind::Expand, &[c], OpAttrs::shape(&[2, 2]))?;
    let s = b.op(OpKind::Sub, &[d, ce], OpAttrs::none())?;
    let r = b.op(OpKind::Reshape, &[right], OpAttrs::shape(&[2, 2]))?;
    let st = b.op(OpKind::Stack, &[s, r], OpAttrs::axis(0))?;
    let scale = b.param(Tensor::scalar(1.7));
    let q = b.op(OpKind::Div, &[st, scale], OpAttrs::none())?;
    let sv = b.op(OpKind::Silu, &[q], OpAttrs::none())?;
    let halves = b.op(OpKind::Split, &[sv], OpAttrs::split(2, &[1, 1]))?;
    let u = b.rec.record_op(OpKind::Reshape, &[halves.out(0)], OpAttrs::shape(&[2, 2]))?;
    let w = b.rec.record_op(OpKind::Reshape, &[halves.out(1)], OpAttrs::shape(&[2, 2]))?;
    let wt = b.op(OpKind::Transpose, &[w], OpAttrs::transpose(0, 1))?;
    let t1 = b.op(OpKind::MatMul, &[u, wt], OpAttrs::none())?;
    let t2 = b.op(OpKind::Neg, &[u], OpAttrs::none())?;
    let pair = b.op(OpKind::Stack, &[t1, t2], OpAttrs::axis(0))?;
    let inner = b.op(OpKind::Sum, &[pair], OpAttrs::axis(0))?;
    b.op(OpKind::Sum, &[inner], OpAttrs::axis(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::kind_histogram;

    #[test]
    fn mlp_on_zeros_is_bias_only() {
        let m = build_mlp(&[4, 8, 2], 3);
        let (y, rg) = m.run_forward(&Tensor::zeros(&[4])).unwrap();
        // Hidden layer output is relu(b1); output is relu(b1) W2 + b2.
        let params = rg.graph.parameters();
        let b1 = rg.shadow.outputs[params[1].0][0].map(|v| v.max(0.0));
        let w2 = &rg.shadow.outputs[params[2].0][0];
        let b2 = &rg.shadow.outputs[params[3].0][0];
        let expect = crate::kernels::linear(&b1, w2, Some(b2)).unwrap();
        assert_eq!(y, expect);
    }

    #[test]
    fn same_seed_same_graph() {
        for m in ModelSpec::zoo(9) {
            let x = m.sample_input(1);
            let (y1, g1) = m.run_forward(&x).unwrap();
            let (y2, g2) = m.run_forward(&x).unwrap();
            assert_eq!(y1, y2);
            assert_eq!(g1.graph.topology_hash(), g2.graph.topology_hash());
            assert_eq!(g1.graph.len(), g2.graph.len());
            assert!(y1.is_finite());
        }
    }

    #[test]
    fn zoo_uses_supported_kinds_only() {
        let mut all = ModelSpec::zoo(0);
        all.push(build_op_tour(0));
        for m in all {
            let (_, rg) = m.run_forward(&m.sample_input(0)).unwrap();
            assert!(rg.graph.nodes().iter().all(|n| n.kind.is_supported()), "{}", m.name);
            assert!(rg.graph.nodes_without_arg_descendant().is_empty());
        }
    }

    #[test]
    fn residual_counts_adds() {
        let m = build_residual_block(4, 3, 0, true);
        let (_, rg) = m.run_forward(&m.sample_input(0)).unwrap();
        assert_eq!(kind_histogram(&rg.graph)["Add"], 3);
    }
}
