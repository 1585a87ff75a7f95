//! Dense row-major tensor of 64-bit floats.
//!
//! Everything numeric in this crate is built on [`Tensor`]. The layout is
//! row-major (last axis fastest) and fixed, so serialized tensors are
//! portable across platforms. 64-bit floats are used throughout: the
//! finite-difference gradient suites need the precision headroom that f32
//! would not give.
//!
//! Tensors are immutable values after construction as far as the public
//! API is concerned; all operations return new tensors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and flat row-major data.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::BadShape {
                op: "Tensor::new",
                expected: format!("{expected} elements for shape {shape:?}"),
                got: vec![data.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Normal samples via Box-Muller on a ChaCha20 stream; bit-identical
    /// across runs for a fixed seed.
    pub fn random_normal(shape: &[usize], mean: f64, std: f64, seed: u64) -> Self {
        assert!(std >= 0.0, "standard deviation must be non-negative");
        let len: usize = shape.iter().product();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(len);
        while data.len() < len {
            // u1 in (0, 1] so the log is finite.
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            data.push(mean + std * r * theta.cos());
            if data.len() < len {
                data.push(mean + std * r * theta.sin());
            }
        }
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Identity matrix of side `n`.
    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn zip_with(&self, rhs: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn maximum(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "maximum", f64::max)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sum of element-wise products; shapes must match.
    pub fn dot(&self, rhs: &Tensor) -> Result<f64> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op: "dot",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        Ok(self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Decomposes the shape around `axis` into (outer, mid, inner) extents.
    fn axis_split(&self, axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= self.rank() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let outer = self.shape[..axis].iter().product();
        let mid = self.shape[axis];
        let inner = self.shape[axis + 1..].iter().product();
        Ok((outer, mid, inner))
    }

    /// Mean over one axis; the axis is removed from the shape.
    pub fn reduce_mean(&self, axis: usize) -> Result<Tensor> {
        let (outer, mid, inner) = self.axis_split(axis)?;
        if mid == 0 {
            return Err(Error::EmptyInput("reduce_mean over an empty axis"));
        }
        let mut out_shape = self.shape.clone();
        out_shape.remove(axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                let base = (o * mid + m) * inner;
                for i in 0..inner {
                    out[o * inner + i] += self.data[base + i];
                }
            }
        }
        let inv = 1.0 / mid as f64;
        for v in &mut out {
            *v *= inv;
        }
        Tensor::new(&out_shape, out)
    }

    /// Matrix product of a (m, k) and a (k, n) tensor.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || rhs.rank() != 2 || self.shape[1] != rhs.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let n = rhs.shape[1];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            for x in 0..k {
                let a = self.data[r * k + x];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[x * n..(x + 1) * n];
                let orow = &mut out[r * n..(r + 1) * n];
                for c in 0..n {
                    orow[c] += a * rrow[c];
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    /// Concatenates tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::EmptyInput("concat of no tensors"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::AxisOutOfRange { axis, rank });
        }
        let mut axis_total = 0;
        for p in parts {
            if p.rank() != rank
                || p.shape[..axis] != first.shape[..axis]
                || p.shape[axis + 1..] != first.shape[axis + 1..]
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: first.shape.clone(),
                    right: p.shape.clone(),
                });
            }
            axis_total += p.shape[axis];
        }
        let mut out_shape = first.shape.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for p in parts {
                let mid = p.shape[axis];
                let start = o * mid * inner;
                data.extend_from_slice(&p.data[start..start + mid * inner]);
            }
        }
        Tensor::new(&out_shape, data)
    }

    /// Takes `len` slots starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let (outer, mid, inner) = self.axis_split(axis)?;
        if start + len > mid {
            return Err(Error::BadShape {
                op: "slice",
                expected: format!("start+len <= {mid} along axis {axis}"),
                got: vec![start, len],
            });
        }
        let mut out_shape = self.shape.clone();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * mid + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Tensor::new(&out_shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_and_full() {
        let z = Tensor::zeros(&[2, 3]);
        assert_eq!(z.len(), 6);
        assert!(z.data().iter().all(|&v| v == 0.0));
        let f = Tensor::full(&[1], 5.0);
        assert_eq!(f.data(), &[5.0]);
    }

    #[test]
    fn random_normal_is_deterministic() {
        let a = Tensor::random_normal(&[4], 0.0, 1.0, 7);
        let b = Tensor::random_normal(&[4], 0.0, 1.0, 7);
        assert_eq!(a, b);
        let c = Tensor::random_normal(&[4], 0.0, 1.0, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn elementwise_ops() {
        let a = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        let a = Tensor::new(&[2], vec![1.0, 3.0]).unwrap();
        let b = Tensor::new(&[2], vec![3.0, 1.0]).unwrap();
        assert_eq!(a.maximum(&b).unwrap().data(), &[3.0, 3.0]);
        let a = Tensor::new(&[2], vec![2.0, 0.5]).unwrap();
        let b = Tensor::new(&[2], vec![0.5, 2.0]).unwrap();
        assert_eq!(a.mul(&b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_is_reported_with_both_shapes() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[3]);
        let err = a.add(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn concat_shapes() {
        let a = Tensor::zeros(&[5, 3]);
        let b = Tensor::zeros(&[5, 1]);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[5, 4]);
    }

    #[test]
    fn reduce_mean_axis0() {
        let t = Tensor::new(&[2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let m = t.reduce_mean(0).unwrap();
        assert_eq!(m.shape(), &[2]);
        assert_eq!(m.data(), &[3.0, 5.0]);
    }

    #[test]
    fn matmul_identity() {
        let x = Tensor::random_normal(&[3, 4], 0.0, 1.0, 3);
        let id = Tensor::identity(3);
        let y = id.matmul(&x).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn bad_data_length_rejected() {
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn add_max_mul_commute(len in 1usize..20, seed in 0u64..1000) {
            let a = Tensor::random_normal(&[len], 0.0, 1.0, seed);
            let b = Tensor::random_normal(&[len], 0.0, 1.0, seed + 1);
            prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
            prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
            prop_assert_eq!(a.maximum(&b).unwrap(), b.maximum(&a).unwrap());
        }

        #[test]
        fn concat_then_slice_roundtrips(
            rows in 1usize..6,
            left in 1usize..5,
            right in 1usize..5,
            seed in 0u64..1000,
        ) {
            let a = Tensor::random_normal(&[rows, left], 0.0, 1.0, seed);
            let b = Tensor::random_normal(&[rows, right], 0.0, 1.0, seed + 7);
            let cat = Tensor::concat(&[&a, &b], 1).unwrap();
            prop_assert_eq!(cat.slice(1, 0, left).unwrap(), a);
            prop_assert_eq!(cat.slice(1, left, right).unwrap(), b);
        }
    }
}
