use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Kind of a recorded graph node.
///
/// `Opaque` stands for any operation this crate has no kernel or rule for.
/// It appears when a graph is imported from JSON with an unknown kind name,
/// or when a caller splices an externally computed value into a recording.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum OpKind {
    Input,
    Parameter,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    MatMul,
    Bmm,
    Linear,
    Conv2d,
    MaxPool2d,
    Sum,
    Mean,
    Cat,
    Stack,
    Unbind,
    Split,
    View,
    Reshape,
    Transpose,
    Permute,
    Expand,
    Slice,
    Relu,
    Gelu,
    Silu,
    MaskedFill,
    Softmax,
    LayerNorm,
    Opaque(String),
}

impl OpKind {
    /// Every kind with a kernel and a propagation rule.
    pub const SUPPORTED: &'static [OpKind] = &[
        OpKind::Input,
        OpKind::Parameter,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Neg,
        OpKind::MatMul,
        OpKind::Bmm,
        OpKind::Linear,
        OpKind::Conv2d,
        OpKind::MaxPool2d,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Cat,
        OpKind::Stack,
        OpKind::Unbind,
        OpKind::Split,
        OpKind::View,
        OpKind::Reshape,
        OpKind::Transpose,
        OpKind::Permute,
        OpKind::Expand,
        OpKind::Slice,
        OpKind::Relu,
        OpKind::Gelu,
        OpKind::Silu,
        OpKind::MaskedFill,
        OpKind::Softmax,
        OpKind::LayerNorm,
    ];

    pub fn name(&self) -> &str {
        match self {
            OpKind::Input => "Input",
            OpKind::Parameter => "Parameter",
            OpKind::Add => "Add",
            OpKind::Sub => "Sub",
            OpKind::Mul => "Mul",
            OpKind::Div => "Div",
            OpKind::Neg => "Neg",
            OpKind::MatMul => "MatMul",
            OpKind::Bmm => "Bmm",
            OpKind::Linear => "Linear",
            OpKind::Conv2d => "Conv2d",
            OpKind::MaxPool2d => "MaxPool2d",
            OpKind::Sum => "Sum",
            OpKind::Mean => "Mean",
            OpKind::Cat => "Cat",
            OpKind::Stack => "Stack",
            OpKind::Unbind => "Unbind",
            OpKind::Split => "Split",
            OpKind::View => "View",
            OpKind::Reshape => "Reshape",
            OpKind::Transpose => "Transpose",
            OpKind::Permute => "Permute",
            OpKind::Expand => "Expand",
            OpKind::Slice => "Slice",
            OpKind::Relu => "Relu",
            OpKind::Gelu => "Gelu",
            OpKind::Silu => "Silu",
            OpKind::MaskedFill => "MaskedFill",
            OpKind::Softmax => "Softmax",
            OpKind::LayerNorm => "LayerNorm",
            OpKind::Opaque(name) => name,
        }
    }

    pub fn from_name(name: &str) -> OpKind {
        OpKind::SUPPORTED
            .iter()
            .find(|k| k.name() == name)
            .cloned()
            .unwrap_or_else(|| OpKind::Opaque(name.to_string()))
    }

    pub fn is_supported(&self) -> bool {
        !matches!(self, OpKind::Opaque(_))
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, OpKind::Input | OpKind::Parameter)
    }

    /// Number of forward outputs, given the node's attributes.
    pub fn num_outputs(&self, attrs: &OpAttrs, input_shapes: &[Vec<usize>]) -> usize {
        match self {
            OpKind::Unbind => attrs
                .axis
                .and_then(|a| input_shapes.first().and_then(|s| s.get(a)).copied())
                .unwrap_or(1),
            OpKind::Split => attrs.split_sizes.as_ref().map_or(1, Vec::len),
            _ => 1,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<String> for OpKind {
    fn from(s: String) -> Self {
        OpKind::from_name(&s)
    }
}

impl From<OpKind> for String {
    fn from(k: OpKind) -> Self {
        k.name().to_string()
    }
}

/// Static attributes of an op. Unused fields stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpAttrs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    /// Transpose pair or permutation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<usize>>,
    /// Target shape for Reshape/View/Expand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// MaskedFill: `true` marks positions overwritten with `fill_value`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fill_value: Option<f64>,
}

impl OpAttrs {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn axis(axis: usize) -> Self {
        OpAttrs {
            axis: Some(axis),
            ..Self::default()
        }
    }

    pub fn shape(shape: &[usize]) -> Self {
        OpAttrs {
            shape: Some(shape.to_vec()),
            ..Self::default()
        }
    }

    pub fn transpose(d0: usize, d1: usize) -> Self {
        OpAttrs {
            axes: Some(alloc::vec![d0, d1]),
            ..Self::default()
        }
    }

    pub fn permute(perm: &[usize]) -> Self {
        OpAttrs {
            axes: Some(perm.to_vec()),
            ..Self::default()
        }
    }

    pub fn split(axis: usize, sizes: &[usize]) -> Self {
        OpAttrs {
            axis: Some(axis),
            split_sizes: Some(sizes.to_vec()),
            ..Self::default()
        }
    }

    pub fn slice(axis: usize, start: usize, end: usize) -> Self {
        OpAttrs {
            axis: Some(axis),
            start: Some(start),
            end: Some(end),
            ..Self::default()
        }
    }

    pub fn conv(stride: usize, padding: usize) -> Self {
        OpAttrs {
            stride: Some(stride),
            padding: Some(padding),
            ..Self::default()
        }
    }

    pub fn pool(kernel: usize, stride: usize) -> Self {
        OpAttrs {
            kernel: Some(kernel),
            stride: Some(stride),
            ..Self::default()
        }
    }

    pub fn layer_norm(eps: f64) -> Self {
        OpAttrs {
            epsilon: Some(eps),
            ..Self::default()
        }
    }

    pub fn masked_fill(mask: Vec<bool>, value: f64) -> Self {
        OpAttrs {
            mask: Some(mask),
            fill_value: Some(value),
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for k in OpKind::SUPPORTED {
            assert_eq!(&OpKind::from_name(k.name()), k);
        }
        assert_eq!(
            OpKind::from_name("WeightNormInterface"),
            OpKind::Opaque("WeightNormInterface".into())
        );
    }
}
