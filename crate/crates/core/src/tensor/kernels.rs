// Raw forward kernels shared by the eager helpers and the graph.

use super::Tensor;
use crate::error::{Error, Result};

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

pub(crate) fn zip_same(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, a, b));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

pub(crate) fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

/// Row-major `rows x inner` times `inner x cols`, accumulated into `out`.
fn gemm(a: &[f64], b: &[f64], out: &mut [f64], rows: usize, inner: usize, cols: usize) {
    for i in 0..rows {
        let out_row = &mut out[i * cols..(i + 1) * cols];
        let a_row = &a[i * inner..(i + 1) * inner];
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = &b[k * cols..(k + 1) * cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
}

/// `a^T b` for row-major `a: rows x m`, `b: rows x n`, giving `m x n`.
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], rows: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..rows {
        let a_row = &a[r * m..(r + 1) * m];
        let b_row = &b[r * n..(r + 1) * n];
        for (i, &ai) in a_row.iter().enumerate() {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bj) in out_row.iter_mut().zip(b_row) {
                *o += ai * bj;
            }
        }
    }
    out
}

/// `a b^T` for row-major `a: m x k`, `b: n x k`, giving `m x n`.
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * n + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() < 1 || b.rank() != 2 || a.shape()[a.rank() - 1] != b.shape()[0] {
        return Err(shape_err("matmul", a, b));
    }
    let inner = b.shape()[0];
    let cols = b.shape()[1];
    let rows = a.numel() / inner;
    let mut out = vec![0.0; rows * cols];
    gemm(a.data(), b.data(), &mut out, rows, inner, cols);
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = cols;
    Ok(Tensor::from_parts(shape, out))
}

pub(crate) fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[1]
    {
        return Err(shape_err("bmm", a, b));
    }
    let (batch, m, n, p) = (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2]);
    let mut out = vec![0.0; batch * m * p];
    for i in 0..batch {
        gemm(
            &a.data()[i * m * n..(i + 1) * m * n],
            &b.data()[i * n * p..(i + 1) * n * p],
            &mut out[i * m * p..(i + 1) * m * p],
            m,
            n,
            p,
        );
    }
    Ok(Tensor::from_parts(vec![batch, m, p], out))
}

pub(crate) fn transpose_last2(a: &Tensor) -> Result<Tensor> {
    let r = a.rank();
    if r < 2 {
        return Err(Error::InvalidTensor(format!(
            "transpose needs rank >= 2, got {:?}",
            a.shape()
        )));
    }
    let (m, n) = (a.shape()[r - 2], a.shape()[r - 1]);
    let batch = a.numel() / (m * n);
    let mut out = vec![0.0; a.numel()];
    for bi in 0..batch {
        let src = &a.data()[bi * m * n..(bi + 1) * m * n];
        let dst = &mut out[bi * m * n..(bi + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
    let mut shape = a.shape().to_vec();
    shape.swap(r - 2, r - 1);
    Ok(Tensor::from_parts(shape, out))
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidTensor("concat of zero tensors".into()))?;
    if axis >= first.rank() {
        return Err(Error::InvalidTensor(format!(
            "concat axis {axis} out of range for {:?}",
            first.shape()
        )));
    }
    let mut total = 0;
    for p in parts {
        let same_rank = p.rank() == first.rank();
        let same_other = same_rank
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !same_other {
            return Err(shape_err("concat", first, p));
        }
        total += p.shape()[axis];
    }
    let (outer, _, inner) = split_axis(first.shape(), axis);
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

pub(crate) fn narrow(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= a.rank() || len == 0 || start + len > a.shape()[axis] {
        return Err(Error::InvalidTensor(format!(
            "narrow(axis={axis}, start={start}, len={len}) out of range for {:?}",
            a.shape()
        )));
    }
    let (outer, n, inner) = split_axis(a.shape(), axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        out.extend_from_slice(&a.data()[base..base + len * inner]);
    }
    let mut shape = a.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, out))
}

/// Sums out `axis`, removing it from the shape.
pub(crate) fn sum_axis(a: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= a.rank() {
        return Err(Error::InvalidTensor(format!(
            "axis {axis} out of range for {:?}",
            a.shape()
        )));
    }
    let (outer, n, inner) = split_axis(a.shape(), axis);
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..n {
            let src = &a.data()[(o * n + i) * inner..(o * n + i + 1) * inner];
            for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    let mut shape = a.shape().to_vec();
    shape.remove(axis);
    Ok(Tensor::from_parts(shape, out))
}

/// Inserts a new axis of extent `n` at `axis`, repeating the data.
pub(crate) fn broadcast_axis(a: &Tensor, axis: usize, n: usize) -> Result<Tensor> {
    if axis > a.rank() || n == 0 {
        return Err(Error::InvalidTensor(format!(
            "broadcast axis {axis} (n={n}) invalid for {:?}",
            a.shape()
        )));
    }
    let outer: usize = a.shape()[..axis].iter().product();
    let inner: usize = a.shape()[axis..].iter().product();
    let mut out = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        let src = &a.data()[o * inner..(o + 1) * inner];
        for _ in 0..n {
            out.extend_from_slice(src);
        }
    }
    let mut shape = a.shape().to_vec();
    shape.insert(axis, n);
    Ok(Tensor::from_parts(shape, out))
}

pub(crate) fn softmax_last(x: &Tensor) -> Tensor {
    let n = *x.shape().last().unwrap();
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(n) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

/// Returns the normalized tensor and the per-slice denominators `max(norm, eps)`.
pub(crate) fn l2_normalize_last(x: &Tensor, eps: f64) -> (Tensor, Vec<f64>) {
    let n = *x.shape().last().unwrap();
    let mut out = x.data().to_vec();
    let mut denoms = Vec::with_capacity(x.numel() / n);
    for row in out.chunks_mut(n) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = norm.max(eps);
        for v in row.iter_mut() {
            *v /= d;
        }
        denoms.push(d);
    }
    (Tensor::from_parts(x.shape().to_vec(), out), denoms)
}
