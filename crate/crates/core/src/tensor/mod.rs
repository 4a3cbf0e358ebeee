//! Dense `f64` tensors and the reverse-mode engine built on them.
//!
//! [`Tensor`] is an immutable row-major value. Differentiable computation is
//! recorded on a [`Graph`], which owns every intermediate and replays the
//! adjoint rules in reverse on [`Graph::backward`]. [`grad_check`] compares
//! those adjoints against central finite differences.

mod check;
mod graph;
pub(crate) mod kernels;

pub use check::{grad_check, GradCheckReport, DEFAULT_STEP};
pub use graph::{Gradients, Graph, Var};

use std::fmt;

use crate::error::{Error, Result};

/// Default guard used by [`l2_normalize_last`].
pub const DEFAULT_NORM_EPS: f64 = 1e-12;

/// Dense row-major array of 64-bit reals.
///
/// Every extent is positive and every element is finite. A rank-0 tensor
/// (empty shape) holds a single scalar.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "zero extent in shape {shape:?}"
            )));
        }
        let numel = checked_numel(&shape)
            .ok_or_else(|| Error::InvalidTensor(format!("shape {shape:?} overflows")))?;
        if numel != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} holds {numel} elements but {} were given",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor("non-finite element".into()));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor whose invariants the caller has already established.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(Vec::new(), vec![value])
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        assert!(shape.iter().all(|&d| d > 0), "zero extent in {shape:?}");
        let n = shape.iter().product();
        Tensor::from_parts(shape, vec![value; n])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor::from_parts(other.shape.clone(), vec![0.0; other.data.len()])
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::NotScalar(self.shape.clone()))
        }
    }

    /// Element at a multi-index. Panics when the index is out of range.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {index:?} out of range for {:?}", self.shape);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        if shape.contains(&0) || checked_numel(&shape) != Some(self.numel()) {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape,
            });
        }
        Ok(Tensor::from_parts(shape, self.data.clone()))
    }

    /// Returns the data only if every element is finite.
    pub(crate) fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteInput(what))
        }
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

pub(crate) fn checked_numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Softmax over the last axis, stabilized by subtracting each slice's max.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    x.ensure_finite("softmax_last")?;
    if x.rank() == 0 {
        return Err(Error::InvalidTensor("softmax_last needs rank >= 1".into()));
    }
    Ok(kernels::softmax_last(x))
}

/// Divides each last-axis slice by `max(norm, eps)`.
pub fn l2_normalize_last(x: &Tensor, eps: f64) -> Result<Tensor> {
    x.ensure_finite("l2_normalize_last")?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if x.rank() == 0 {
        return Err(Error::InvalidTensor(
            "l2_normalize_last needs rank >= 1".into(),
        ));
    }
    Ok(kernels::l2_normalize_last(x, eps).0)
}

/// Batched matrix product `[B,M,N] x [B,N,P] -> [B,M,P]`.
pub fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    kernels::bmm(a, b)
}

/// `[..., N] x [N, P] -> [..., P]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    kernels::matmul(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::INFINITY]).is_err());
        assert_eq!(Tensor::new(Vec::new(), vec![3.0]).unwrap().item().unwrap(), 3.0);
    }

    #[test]
    fn softmax_examples() {
        let y = softmax_last(&t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);

        // exp(1), exp(2), exp(3) normalized by hand.
        let (e1, e2, e3) = (1f64.exp(), 2f64.exp(), 3f64.exp());
        let z = e1 + e2 + e3;
        let y = softmax_last(&t(&[3], &[1.0, 2.0, 3.0])).unwrap();
        for (got, want) in y.data().iter().zip([e1 / z, e2 / z, e3 / z]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in y.data().iter().zip([0.09003057, 0.24472847, 0.66524096]) {
            assert!((got - want).abs() < 1e-8);
        }

        for x in [-1e300, -3.5, 0.0, 7.0, 1e300] {
            assert_eq!(softmax_last(&t(&[1], &[x])).unwrap().data(), &[1.0]);
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let bad = Tensor::from_parts(vec![2], vec![0.0, f64::NAN]);
        assert!(matches!(softmax_last(&bad), Err(Error::NonFiniteInput(_))));
    }

    #[test]
    fn l2_normalize_examples() {
        let y = l2_normalize_last(&t(&[2], &[3.0, 4.0]), DEFAULT_NORM_EPS).unwrap();
        assert!((y.data()[0] - 0.6).abs() < 1e-15 && (y.data()[1] - 0.8).abs() < 1e-15);
        let y = l2_normalize_last(&t(&[2], &[0.0, 0.0]), DEFAULT_NORM_EPS).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
        let y = l2_normalize_last(&t(&[4], &[1.0; 4]), DEFAULT_NORM_EPS).unwrap();
        assert_eq!(y.data(), &[0.5; 4]);
        assert!(l2_normalize_last(&t(&[1], &[1.0]), 0.0).is_err());
    }

    #[test]
    fn bmm_examples() {
        let a = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[1, 2, 1], &[5.0, 6.0]);
        assert_eq!(bmm(&a, &b).unwrap().data(), &[17.0, 39.0]);

        let eye = t(&[1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert!(bmm(&a, &eye).unwrap().bit_eq(&a));

        let zeros = Tensor::zeros(vec![1, 2, 2]);
        assert!(bmm(&zeros, &a).unwrap().data().iter().all(|&v| v == 0.0));

        let err = bmm(&a, &t(&[2, 2, 1], &[1.0; 4])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 2]") && msg.contains("[2, 2, 1]"), "{msg}");
    }
}
