//! Plain-value tensor kernels.
//!
//! Every kernel uses a fixed summation order (lane accumulators combined in
//! a fixed tree, loop order fixed by code) so repeated runs are bit-identical
//! regardless of thread scheduling above this layer.

use super::{Result, Scalar, Tensor, TensorError};

const LANES: usize = 8;

/// Dot product with eight independent accumulators combined in fixed order.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        acc[0] += xa[0] * xb[0];
        acc[1] += xa[1] * xb[1];
        acc[2] += xa[2] * xb[2];
        acc[3] += xa[3] * xb[3];
        acc[4] += xa[4] * xb[4];
        acc[5] += xa[5] * xb[5];
        acc[6] += xa[6] * xb[6];
        acc[7] += xa[7] * xb[7];
    }
    let mut tail = S::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn require_rank2<S: Scalar>(t: &Tensor<S>, op: &'static str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(TensorError::Rank {
            op,
            expected: 2,
            shape: t.shape().to_vec(),
        });
    }
    Ok((t.dim(0), t.dim(1)))
}

/// `a[m,k] @ b[k,n] -> [m,n]`.
pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (m, k) = require_rank2(a, "matmul")?;
    let (kb, n) = require_rank2(b, "matmul")?;
    if k != kb {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![S::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let crow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    Tensor::new(out, vec![m, n])
}

/// `a[m,k] @ b[n,k]^T -> [m,n]`; both operands read row-contiguously.
pub fn matmul_transb<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (m, k) = require_rank2(a, "matmul_transb")?;
    let (n, kb) = require_rank2(b, "matmul_transb")?;
    if k != kb {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_transb",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![S::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let crow = &mut out[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            *cv = dot(arow, &bd[j * k..(j + 1) * k]);
        }
    }
    Tensor::new(out, vec![m, n])
}

/// `a[m,k]^T @ b[m,n] -> [k,n]`; rank-1 update form, used by backward passes.
pub fn matmul_transa<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (m, k) = require_rank2(a, "matmul_transa")?;
    let (mb, n) = require_rank2(b, "matmul_transa")?;
    if m != mb {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_transa",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![S::zero(); k * n];
    let (ad, bd) = (a.data(), b.data());
    for r in 0..m {
        let arow = &ad[r * k..(r + 1) * k];
        let brow = &bd[r * n..(r + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut out[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    Tensor::new(out, vec![k, n])
}

pub fn add<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "add",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(data, a.shape().to_vec())
}

pub fn scale<S: Scalar>(a: &Tensor<S>, c: S) -> Tensor<S> {
    Tensor::from_fn(a.shape().to_vec(), |i| a.data()[i] * c)
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// SiLU activation `x * sigmoid(x)`, the MLP nonlinearity.
pub fn silu<S: Scalar>(a: &Tensor<S>) -> Tensor<S> {
    Tensor::from_fn(a.shape().to_vec(), |i| {
        let x = a.data()[i];
        x * sigmoid(x)
    })
}

pub(crate) fn silu_grad_at<S: Scalar>(x: S) -> S {
    let s = sigmoid(x);
    s + x * s * (S::one() - s)
}

/// Softmax along `axis`, numerically stabilized by max-subtraction.
/// NaN input is an error; each output slice sums to 1.
pub fn softmax<S: Scalar>(x: &Tensor<S>, axis: usize) -> Result<Tensor<S>> {
    if x.rank() == 0 || axis >= x.rank() {
        return Err(TensorError::InvalidAxis {
            op: "softmax",
            axis,
            shape: x.shape().to_vec(),
        });
    }
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(TensorError::NonFinite { op: "softmax" });
    }
    let n = x.dim(axis);
    if n == 0 {
        return Err(TensorError::Empty { op: "softmax" });
    }
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let outer: usize = x.shape()[..axis].iter().product();
    let mut out = vec![S::zero(); x.numel()];
    let data = x.data();
    let mut lane = vec![S::zero(); n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for (j, l) in lane.iter_mut().enumerate() {
                *l = data[base + j * inner];
            }
            softmax_slice(&lane, &mut out[..], base, inner);
        }
    }
    Tensor::new(out, x.shape().to_vec())
}

#[inline]
fn softmax_slice<S: Scalar>(lane: &[S], out: &mut [S], base: usize, stride: usize) {
    let mut mx = lane[0];
    for &v in &lane[1..] {
        if v > mx {
            mx = v;
        }
    }
    let mut sum = S::zero();
    for (j, &v) in lane.iter().enumerate() {
        let e = (v - mx).exp();
        out[base + j * stride] = e;
        sum += e;
    }
    let inv = S::one() / sum;
    for j in 0..lane.len() {
        out[base + j * stride] *= inv;
    }
}

/// Row-wise softmax of `scores[t,t]` restricted to the causal lower triangle;
/// masked entries are exactly zero.
pub fn causal_softmax<S: Scalar>(scores: &Tensor<S>) -> Result<Tensor<S>> {
    let (t, t2) = require_rank2(scores, "causal_softmax")?;
    if t != t2 {
        return Err(TensorError::ShapeMismatch {
            op: "causal_softmax",
            left: scores.shape().to_vec(),
            right: scores.shape().to_vec(),
        });
    }
    if scores.data().iter().any(|v| v.is_nan()) {
        return Err(TensorError::NonFinite { op: "causal_softmax" });
    }
    let mut out = vec![S::zero(); t * t];
    let data = scores.data();
    for i in 0..t {
        let row = &data[i * t..i * t + i + 1];
        let mut mx = row[0];
        for &v in &row[1..] {
            if v > mx {
                mx = v;
            }
        }
        let orow = &mut out[i * t..i * t + i + 1];
        let mut sum = S::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - mx).exp();
            *o = e;
            sum += e;
        }
        let inv = S::one() / sum;
        for o in orow.iter_mut() {
            *o *= inv;
        }
    }
    Tensor::new(out, vec![t, t])
}

/// Scales each trailing-dim slice to unit root-mean-square, then applies `gain`.
pub fn rms_norm<S: Scalar>(x: &Tensor<S>, gain: &Tensor<S>, eps: S) -> Result<Tensor<S>> {
    let d = *x.shape().last().ok_or(TensorError::Empty { op: "rms_norm" })?;
    if gain.shape() != [d] {
        return Err(TensorError::ShapeMismatch {
            op: "rms_norm",
            left: x.shape().to_vec(),
            right: gain.shape().to_vec(),
        });
    }
    let rows = x.numel() / d;
    let mut out = vec![S::zero(); x.numel()];
    let (data, g) = (x.data(), gain.data());
    let dn = S::from_f64_c(d as f64);
    for r in 0..rows {
        let row = &data[r * d..(r + 1) * d];
        let ms = dot(row, row) / dn;
        let inv = S::one() / (ms + eps).sqrt();
        for ((o, &v), &gv) in out[r * d..(r + 1) * d].iter_mut().zip(row).zip(g) {
            *o = v * inv * gv;
        }
    }
    Tensor::new(out, x.shape().to_vec())
}

/// Mean negative log-softmax probability of `targets` under `logits[n,V]`,
/// optionally weighted per row (weights are normalized by their sum).
pub fn cross_entropy_weighted<S: Scalar>(
    logits: &Tensor<S>,
    targets: &[usize],
    weights: Option<&[S]>,
) -> Result<Tensor<S>> {
    let (n, v) = require_rank2(logits, "cross_entropy")?;
    if targets.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            left: logits.shape().to_vec(),
            right: vec![targets.len()],
        });
    }
    if n == 0 {
        return Err(TensorError::Empty { op: "cross_entropy" });
    }
    for &t in targets {
        if t >= v {
            return Err(TensorError::TargetOutOfRange { target: t, vocab: v });
        }
    }
    let data = logits.data();
    let mut loss = S::zero();
    let mut wsum = S::zero();
    for (i, &t) in targets.iter().enumerate() {
        let row = &data[i * v..(i + 1) * v];
        let nll = log_sum_exp(row) - row[t];
        let w = weights.map_or(S::one(), |ws| ws[i]);
        loss += w * nll;
        wsum += w;
    }
    Ok(Tensor::scalar(loss / wsum))
}

/// Uniform-weight cross entropy: mean negative log-softmax of the targets.
pub fn cross_entropy<S: Scalar>(logits: &Tensor<S>, targets: &[usize]) -> Result<Tensor<S>> {
    cross_entropy_weighted(logits, targets, None)
}

#[inline]
pub fn log_sum_exp<S: Scalar>(row: &[S]) -> S {
    let mut mx = row[0];
    for &v in &row[1..] {
        if v > mx {
            mx = v;
        }
    }
    let mut sum = S::zero();
    for &v in row {
        sum += (v - mx).exp();
    }
    mx + sum.ln()
}

/// Rows of `table[v,d]` selected by `ids` (embedding lookup).
pub fn gather_rows<S: Scalar>(table: &Tensor<S>, ids: &[usize]) -> Result<Tensor<S>> {
    let (v, d) = require_rank2(table, "gather_rows")?;
    let mut out = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        if id >= v {
            return Err(TensorError::IndexOutOfBounds {
                op: "gather_rows",
                index: id,
                bound: v,
            });
        }
        out.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
    }
    Tensor::new(out, vec![ids.len(), d])
}

/// Columns `[start, start+len)` of a rank-2 tensor.
pub fn slice_cols<S: Scalar>(x: &Tensor<S>, start: usize, len: usize) -> Result<Tensor<S>> {
    let (m, n) = require_rank2(x, "slice_cols")?;
    if start + len > n {
        return Err(TensorError::IndexOutOfBounds {
            op: "slice_cols",
            index: start + len,
            bound: n,
        });
    }
    let mut out = Vec::with_capacity(m * len);
    for i in 0..m {
        out.extend_from_slice(&x.data()[i * n + start..i * n + start + len]);
    }
    Tensor::new(out, vec![m, len])
}

/// Horizontal concatenation of rank-2 tensors with equal row counts.
pub fn concat_cols<S: Scalar>(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
    if parts.is_empty() {
        return Err(TensorError::Empty { op: "concat_cols" });
    }
    let m = parts[0].dim(0);
    let mut total = 0;
    for p in parts {
        let (pm, pn) = require_rank2(p, "concat_cols")?;
        if pm != m {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                left: parts[0].shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
        total += pn;
    }
    let mut out = Vec::with_capacity(m * total);
    for i in 0..m {
        for p in parts {
            let n = p.dim(1);
            out.extend_from_slice(&p.data()[i * n..(i + 1) * n]);
        }
    }
    Tensor::new(out, vec![m, total])
}

/// Arithmetic mean of the selected rows of a rank-2 tensor.
pub fn mean_rows_subset<S: Scalar>(x: &Tensor<S>, rows: &[usize]) -> Result<Tensor<S>> {
    let (m, n) = require_rank2(x, "mean_rows_subset")?;
    if rows.is_empty() {
        return Err(TensorError::Empty { op: "mean_rows_subset" });
    }
    let mut out = vec![S::zero(); n];
    for &r in rows {
        if r >= m {
            return Err(TensorError::IndexOutOfBounds {
                op: "mean_rows_subset",
                index: r,
                bound: m,
            });
        }
        for (o, &v) in out.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    let inv = S::one() / S::from_f64_c(rows.len() as f64);
    for o in out.iter_mut() {
        *o *= inv;
    }
    Tensor::new(out, vec![n])
}

/// Index of the maximum value; ties resolve to the lowest index.
pub fn argmax_tie_low<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
