//! Dense row-major tensors.
//!
//! A [`Tensor`] is an immutable value: every kernel returns a fresh tensor.
//! Storage is always `f64`; a tensor tagged [`DType::F32`] has every element
//! rounded to the nearest `f32` when it is constructed, so f32 runs see f32
//! rounding at each op boundary.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LrpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    #[default]
    F64,
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(default)]
    dtype: DType,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)?;
        }
        Ok(())
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn round(dtype: DType, v: f64) -> f64 {
    match dtype {
        DType::F64 => v,
        DType::F32 => v as f32 as f64,
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::with_dtype_checked(shape, data, DType::F64)
    }

    fn with_dtype_checked(shape: Vec<usize>, data: Vec<f64>, dtype: DType) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(LrpError::InvalidTensor(alloc::format!(
                "shape {shape:?} must be non-empty with positive extents"
            )));
        }
        if numel(&shape) != data.len() {
            return Err(LrpError::InvalidTensor(alloc::format!(
                "shape {shape:?} holds {} elements, data has {}",
                numel(&shape),
                data.len()
            )));
        }
        let mut t = Tensor { shape, data, dtype };
        if dtype == DType::F32 {
            t.data.iter_mut().for_each(|v| *v = round(dtype, *v));
        }
        Ok(t)
    }

    /// Builds a tensor whose shape is already known to match `data`.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<f64>, dtype: DType) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let mut t = Tensor { shape, data, dtype };
        if dtype == DType::F32 {
            t.data.iter_mut().for_each(|v| *v = round(dtype, *v));
        }
        t
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len().max(1);
        let data = if data.is_empty() { vec![0.0] } else { data };
        Tensor::raw(vec![n], data, DType::F64)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::raw(vec![1], vec![v], DType::F64)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor::raw(shape.to_vec(), vec![v; numel(shape)], DType::F64)
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::raw(self.shape.clone(), vec![0.0; self.data.len()], self.dtype)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn cast(&self, dtype: DType) -> Self {
        Tensor::raw(self.shape.clone(), self.data.clone(), dtype)
    }

    /// Same dtype and shape as `self`, new contents.
    pub(crate) fn like(&self, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Tensor::raw(shape, data, self.dtype)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.like(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| v * a)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() || shape.contains(&0) || shape.is_empty() {
            return Err(LrpError::shape("reshape", &[&self.shape, shape]));
        }
        Ok(self.like(shape.to_vec(), self.data.clone()))
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(LrpError::shape("zip", &[&self.shape, &other.shape]));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(self.like(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(LrpError::shape("max_abs_diff", &[&self.shape, &other.shape]));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max))
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        if index.len() != self.rank() {
            return Err(LrpError::shape("get", &[&self.shape, index]));
        }
        let mut flat = 0;
        for ((&i, &n), s) in index.iter().zip(&self.shape).zip(strides(&self.shape)) {
            if i >= n {
                return Err(LrpError::IndexOutOfRange {
                    index: i,
                    extent: n,
                });
            }
            flat += i * s;
        }
        Ok(self.data[flat])
    }

    /// Swaps two axes.
    pub fn transpose(&self, d0: usize, d1: usize) -> Result<Self> {
        let r = self.rank();
        if d0 >= r || d1 >= r {
            return Err(LrpError::attr("transpose", "axis out of range"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(d0, d1);
        self.permute(&perm)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || core::mem::replace(&mut seen[p], true)) {
            return Err(LrpError::attr("permute", "not a permutation of the axes"));
        }
        let in_strides = strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let mut data = Vec::with_capacity(self.numel());
        let mut idx = vec![0usize; r];
        for _ in 0..self.numel() {
            let src: usize = idx.iter().zip(perm).map(|(&i, &p)| i * in_strides[p]).sum();
            data.push(self.data[src]);
            for ax in (0..r).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Ok(self.like(out_shape, data))
    }

    /// Copies `self` into a tensor of shape `target` where `self.shape` is
    /// either a single element or, after dropping leading unit dimensions, a
    /// suffix of `target`.
    pub fn broadcast_to(&self, target: &[usize]) -> Result<Self> {
        match broadcast_kind(&self.shape, target) {
            Some(_) => {
                let n = self.numel();
                let data = (0..numel(target)).map(|i| self.data[i % n]).collect();
                Ok(self.like(target.to_vec(), data))
            }
            None => Err(LrpError::shape("broadcast", &[&self.shape, target])),
        }
    }

    /// Inverse of [`Tensor::broadcast_to`]: sums the entries that were copies
    /// of the same source element.
    pub fn reduce_to(&self, target: &[usize]) -> Result<Self> {
        if self.shape == target {
            return Ok(self.clone());
        }
        if broadcast_kind(target, &self.shape).is_none() {
            return Err(LrpError::shape("reduce", &[&self.shape, target]));
        }
        let n = numel(target);
        let mut data = vec![0.0; n];
        for (i, v) in self.data.iter().enumerate() {
            data[i % n] += v;
        }
        Ok(self.like(target.to_vec(), data))
    }
}

/// How `small` expands to `big`. `None` when the pair is not broadcastable
/// under the scalar / trailing-dimension policy.
pub(crate) fn broadcast_kind(small: &[usize], big: &[usize]) -> Option<()> {
    if small == big || numel(small) == 1 {
        return Some(());
    }
    let lead = small.iter().take_while(|&&d| d == 1).count();
    let core = &small[lead..];
    if small.len() <= big.len() && big[big.len() - core.len()..] == *core {
        return Some(());
    }
    None
}

/// Output shape of an elementwise binary op, or `None` when not broadcastable.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if broadcast_kind(b, a).is_some() && (a.len() >= b.len() || numel(b) == 1) {
        Some(a.to_vec())
    } else if broadcast_kind(a, b).is_some() {
        Some(b.to_vec())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn f32_rounds_on_construction() {
        let t = Tensor::from_vec(vec![0.1]).cast(DType::F32);
        assert_eq!(t.data()[0], 0.1f32 as f64);
        assert_ne!(t.data()[0], 0.1);
    }

    #[test]
    fn broadcast_policy() {
        assert_eq!(broadcast_shape(&[2, 3], &[3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[3], &[2, 3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[2, 3], &[1]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[2, 3], &[2]), None);
        assert_eq!(broadcast_shape(&[2, 3], &[2, 1]), None);
    }

    #[test]
    fn reduce_inverts_broadcast_sums() {
        let b = Tensor::from_vec(vec![1.0, 2.0]);
        let big = b.broadcast_to(&[3, 2]).unwrap();
        let back = big.reduce_to(&[2]).unwrap();
        assert_eq!(back.data(), &[3.0, 6.0]);
    }

    #[test]
    fn permute_roundtrip() {
        let t = Tensor::new(vec![2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]).unwrap(), t.get(&[1, 2, 3]).unwrap());
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back, t);
    }
}
