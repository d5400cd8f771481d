//! Reverse-mode gradient tape.
//!
//! Ops are recorded in call order; [`Tape::backward`] replays them once each
//! in reverse recording order, accumulating parent gradients. A tape is
//! single-threaded; parallel batch evaluation runs one tape per sequence.

use super::ops;
use super::{Result, Scalar, Tensor, TensorError};

pub type TensorId = usize;

type BackFn<S> = Box<dyn Fn(&[S], &mut Grads<S>)>;

struct Node<S: Scalar> {
    value: Tensor<S>,
    requires_grad: bool,
    parents: Vec<TensorId>,
    backward: Option<BackFn<S>>,
}

/// Gradient buffers keyed by node id. Slots for nodes off the loss path
/// stay empty.
pub struct Grads<S> {
    slots: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Grads<S> {
    pub fn get(&self, id: TensorId) -> Option<&[S]> {
        self.slots.get(id).and_then(|s| s.as_deref())
    }

    /// Gradient of a leaf, densified to zeros when the leaf is off-path.
    pub fn dense(&self, id: TensorId, numel: usize) -> Vec<S> {
        match self.get(id) {
            Some(g) => g.to_vec(),
            None => vec![S::zero(); numel],
        }
    }

    fn with_slot(&mut self, id: TensorId, len: usize, f: impl FnOnce(&mut [S])) {
        let slot = self.slots[id].get_or_insert_with(|| vec![S::zero(); len]);
        f(slot);
    }
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &Tensor<S> {
        &self.nodes[id].value
    }

    pub fn parents(&self, id: TensorId) -> &[TensorId] {
        &self.nodes[id].parents
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id].requires_grad
    }

    /// Registers an input tensor. Its `requires_grad` flag decides whether
    /// downstream ops record backward entries.
    pub fn leaf(&mut self, t: &Tensor<S>) -> TensorId {
        self.push(t.clone(), t.grad_required(), vec![], None)
    }

    fn push(
        &mut self,
        value: Tensor<S>,
        requires_grad: bool,
        parents: Vec<TensorId>,
        backward: Option<BackFn<S>>,
    ) -> TensorId {
        self.nodes.push(Node {
            value,
            requires_grad,
            parents,
            backward: if requires_grad { backward } else { None },
        });
        self.nodes.len() - 1
    }

    fn any_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// `a[m,k] @ b[k,n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        let (va, vb) = (self.value(a).clone(), self.value(b).clone());
        let (ga, gb) = (self.requires_grad(a), self.requires_grad(b));
        let (m, n) = (out.dim(0), out.dim(1));
        let back: BackFn<S> = Box::new(move |g, sink| {
            let gt = Tensor::new(g.to_vec(), vec![m, n]).expect("grad shape");
            if ga {
                let da = ops::matmul_transb(&gt, &vb).expect("matmul backward a");
                sink.with_slot(a, da.numel(), |s| {
                    for (o, &v) in s.iter_mut().zip(da.data()) {
                        *o += v;
                    }
                });
            }
            if gb {
                let db = ops::matmul_transa(&va, &gt).expect("matmul backward b");
                sink.with_slot(b, db.numel(), |s| {
                    for (o, &v) in s.iter_mut().zip(db.data()) {
                        *o += v;
                    }
                });
            }
        });
        Ok(self.push(out, rg, vec![a, b], Some(back)))
    }

    /// `a[m,k] @ b[n,k]^T`.
    pub fn matmul_transb(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let out = ops::matmul_transb(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        let (va, vb) = (self.value(a).clone(), self.value(b).clone());
        let (ga, gb) = (self.requires_grad(a), self.requires_grad(b));
        let (m, n) = (out.dim(0), out.dim(1));
        let back: BackFn<S> = Box::new(move |g, sink| {
            let gt = Tensor::new(g.to_vec(), vec![m, n]).expect("grad shape");
            if ga {
                let da = ops::matmul(&gt, &vb).expect("matmul_transb backward a");
                sink.with_slot(a, da.numel(), |s| {
                    for (o, &v) in s.iter_mut().zip(da.data()) {
                        *o += v;
                    }
                });
            }
            if gb {
                let db = ops::matmul_transa(&gt, &va).expect("matmul_transb backward b");
                sink.with_slot(b, db.numel(), |s| {
                    for (o, &v) in s.iter_mut().zip(db.data()) {
                        *o += v;
                    }
                });
            }
        });
        Ok(self.push(out, rg, vec![a, b], Some(back)))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let out = ops::add(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        let (ga, gb) = (self.requires_grad(a), self.requires_grad(b));
        let back: BackFn<S> = Box::new(move |g, sink| {
            for &(id, on) in [(a, ga), (b, gb)].iter() {
                if on {
                    sink.with_slot(id, g.len(), |s| {
                        for (o, &v) in s.iter_mut().zip(g) {
                            *o += v;
                        }
                    });
                }
            }
        });
        Ok(self.push(out, rg, vec![a, b], Some(back)))
    }

    pub fn scale(&mut self, a: TensorId, c: S) -> TensorId {
        let out = ops::scale(self.value(a), c);
        let rg = self.requires_grad(a);
        let back: BackFn<S> = Box::new(move |g, sink| {
            sink.with_slot(a, g.len(), |s| {
                for (o, &v) in s.iter_mut().zip(g) {
                    *o += v * c;
                }
            });
        });
        self.push(out, rg, vec![a], Some(back))
    }

    pub fn silu(&mut self, a: TensorId) -> TensorId {
        let out = ops::silu(self.value(a));
        let rg = self.requires_grad(a);
        let va = self.value(a).clone();
        let back: BackFn<S> = Box::new(move |g, sink| {
            sink.with_slot(a, g.len(), |s| {
                for ((o, &gv), &xv) in s.iter_mut().zip(g).zip(va.data()) {
                    *o += gv * ops::silu_grad_at(xv);
                }
            });
        });
        self.push(out, rg, vec![a], Some(back))
    }

    pub fn mul_elem(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_elem",
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let (va, vb) = (self.value(a).clone(), self.value(b).clone());
        let out = Tensor::from_fn(va.shape().to_vec(), |i| va.data()[i] * vb.data()[i]);
        let rg = self.any_grad(&[a, b]);
        let (ga, gb) = (self.requires_grad(a), self.requires_grad(b));
        let back: BackFn<S> = Box::new(move |g, sink| {
            if ga {
                sink.with_slot(a, g.len(), |s| {
                    for ((o, &gv), &bv) in s.iter_mut().zip(g).zip(vb.data()) {
                        *o += gv * bv;
                    }
                });
            }
            if gb {
                sink.with_slot(b, g.len(), |s| {
                    for ((o, &gv), &av) in s.iter_mut().zip(g).zip(va.data()) {
                        *o += gv * av;
                    }
                });
            }
        });
        Ok(self.push(out, rg, vec![a, b], Some(back)))
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let mut total = S::zero();
        for &v in self.value(a).data() {
            total += v;
        }
        let rg = self.requires_grad(a);
        let n = self.value(a).numel();
        let back: BackFn<S> = Box::new(move |g, sink| {
            let gv = g[0];
            sink.with_slot(a, n, |s| {
                for o in s.iter_mut() {
                    *o += gv;
                }
            });
        });
        self.push(Tensor::scalar(total), rg, vec![a], Some(back))
    }

    /// Softmax along the trailing axis (the only axis the model needs under
    /// the tape; the plain-value op supports arbitrary axes).
    pub fn softmax_last(&mut self, a: TensorId) -> Result<TensorId> {
        let x = self.value(a);
        let axis = x.rank().saturating_sub(1);
        let out = ops::softmax(x, axis)?;
        let rg = self.requires_grad(a);
        let probs = out.clone();
        let d = *x.shape().last().unwrap();
        let back: BackFn<S> = Box::new(move |g, sink| {
            sink.with_slot(a, g.len(), |s| {
                let rows = g.len() / d;
                for r in 0..rows {
                    let p = &probs.data()[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let inner = ops::dot(p, gr);
                    for j in 0..d {
                        s[r * d + j] += p[j] * (gr[j] - inner);
                    }
                }
            });
        });
        Ok(self.push(out, rg, vec![a], Some(back)))
    }

    /// Row-wise causal softmax of square attention scores.
    pub fn causal_softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let out = ops::causal_softmax(self.value(a))?;
        let rg = self.requires_grad(a);
        let probs = out.clone();
        let t = out.dim(0);
        let back: BackFn<S> = Box::new(move |g, sink| {
            sink.with_slot(a, t * t, |s| {
                for i in 0..t {
                    let p = &probs.data()[i * t..i * t + i + 1];
                    let gr = &g[i * t..i * t + i + 1];
                    let inner = ops::dot(p, gr);
                    for j in 0..=i {
                        s[i * t + j] += p[j] * (gr[j] - inner);
                    }
                }
            });
        });
        Ok(self.push(out, rg, vec![a], Some(back)))
    }

    pub fn rms_norm(&mut self, x: TensorId, gain: TensorId, eps: S) -> Result<TensorId> {
        let out = ops::rms_norm(self.value(x), self.value(gain), eps)?;
        let rg = self.any_grad(&[x, gain]);
        let (vx, vg) = (self.value(x).clone(), self.value(gain).clone());
        let (gx, gg) = (self.requires_grad(x), self.requires_grad(gain));
        let d = *vx.shape().last().unwrap();
        let back: BackFn<S> = Box::new(move |g, sink| {
            let rows = g.len() / d;
            let dn = S::from_f64_c(d as f64);
            let mut inv = vec![S::zero(); rows];
            for (r, iv) in inv.iter_mut().enumerate() {
                let row = &vx.data()[r * d..(r + 1) * d];
                *iv = S::one() / (ops::dot(row, row) / dn + eps).sqrt();
            }
            if gx {
                sink.with_slot(x, rows * d, |s| {
                    for r in 0..rows {
                        let xr = &vx.data()[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        let mut proj = S::zero();
                        for j in 0..d {
                            proj += gr[j] * vg.data()[j] * xr[j];
                        }
                        let k = inv[r] * inv[r] * inv[r] / dn * proj;
                        for j in 0..d {
                            s[r * d + j] += inv[r] * vg.data()[j] * gr[j] - k * xr[j];
                        }
                    }
                });
            }
            if gg {
                sink.with_slot(gain, d, |s| {
                    for r in 0..rows {
                        let xr = &vx.data()[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        for j in 0..d {
                            s[j] += gr[j] * xr[j] * inv[r];
                        }
                    }
                });
            }
        });
        Ok(self.push(out, rg, vec![x, gain], Some(back)))
    }

    /// Embedding lookup; backward scatter-adds into the table gradient.
    pub fn gather_rows(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId> {
        let out = ops::gather_rows(self.value(table), ids)?;
        let rg = self.requires_grad(table);
        let (v, d) = (self.value(table).dim(0), self.value(table).dim(1));
        let ids = ids.to_vec();
        let back: BackFn<S> = Box::new(move |g, sink| {
            sink.with_slot(table, v * d, |s| {
                for (row, &id) in ids.iter().enumerate() {
                    let gr = &g[row * d..(row + 1) * d];
                    let sp = &mut s[id * d..(id + 1) * d];
                    for (o, &gv) in sp.iter_mut().zip(gr) {
                        *o += gv;
                    }
                }
            });
        });
        Ok(self.push(out, rg, vec![table], Some(back)))
    }

    pub fn slice_cols(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let out = ops::slice_cols(self.value(x), start, len)?;
        let rg = self.requires_grad(x);
        let (m, n) = (self.value(x).dim(0), self.value(x).dim(1));
        let back: BackFn<S> = Box::new(move |g, sink| {
            sink.with_slot(x, m * n, |s| {
                for i in 0..m {
                    let gr = &g[i * len..(i + 1) * len];
                    let sp = &mut s[i * n + start..i * n + start + len];
                    for (o, &gv) in sp.iter_mut().zip(gr) {
                        *o += gv;
                    }
                }
            });
        });
        Ok(self.push(out, rg, vec![x], Some(back)))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let tensors: Vec<Tensor<S>> = parts.iter().map(|&p| self.value(p).clone()).collect();
        let refs: Vec<&Tensor<S>> = tensors.iter().collect();
        let out = ops::concat_cols(&refs)?;
        let rg = self.any_grad(parts);
        let m = out.dim(0);
        let total = out.dim(1);
        let widths: Vec<usize> = tensors.iter().map(|t| t.dim(1)).collect();
        let part_ids = parts.to_vec();
        let flags: Vec<bool> = parts.iter().map(|&p| self.requires_grad(p)).collect();
        let back: BackFn<S> = Box::new(move |g, sink| {
            let mut offset = 0;
            for ((&pid, &w), &on) in part_ids.iter().zip(&widths).zip(&flags) {
                if on {
                    sink.with_slot(pid, m * w, |s| {
                        for i in 0..m {
                            let gr = &g[i * total + offset..i * total + offset + w];
                            let sp = &mut s[i * w..(i + 1) * w];
                            for (o, &gv) in sp.iter_mut().zip(gr) {
                                *o += gv;
                            }
                        }
                    });
                }
                offset += w;
            }
        });
        Ok(self.push(out, rg, parts.to_vec(), Some(back)))
    }

    /// Same data under a new shape; backward passes gradients through.
    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let v = self.value(a);
        let expected: usize = shape.iter().product();
        if v.numel() != expected {
            return Err(TensorError::DataLength {
                op: "reshape",
                shape,
                expected,
                got: v.numel(),
            });
        }
        let out = Tensor::new(v.data().to_vec(), shape)?;
        let rg = self.requires_grad(a);
        let n = v.numel();
        let back: BackFn<S> = Box::new(move |g, sink| {
            sink.with_slot(a, n, |s| {
                for (o, &gv) in s.iter_mut().zip(g) {
                    *o += gv;
                }
            });
        });
        Ok(self.push(out, rg, vec![a], Some(back)))
    }

    /// Weighted mean negative log-softmax loss (uniform weights when `None`).
    pub fn cross_entropy(
        &mut self,
        logits: TensorId,
        targets: &[usize],
        weights: Option<&[S]>,
    ) -> Result<TensorId> {
        let out = ops::cross_entropy_weighted(self.value(logits), targets, weights)?;
        let rg = self.requires_grad(logits);
        let vl = self.value(logits).clone();
        let (n, v) = (vl.dim(0), vl.dim(1));
        let targets = targets.to_vec();
        let weights: Vec<S> = match weights {
            Some(w) => w.to_vec(),
            None => vec![S::one(); n],
        };
        let mut wsum = S::zero();
        for &w in &weights {
            wsum += w;
        }
        let back: BackFn<S> = Box::new(move |g, sink| {
            let gv = g[0];
            sink.with_slot(logits, n * v, |s| {
                for (i, &t) in targets.iter().enumerate() {
                    let row = &vl.data()[i * v..(i + 1) * v];
                    let lse = ops::log_sum_exp(row);
                    let w = weights[i] / wsum * gv;
                    let sp = &mut s[i * v..(i + 1) * v];
                    for (j, (o, &lv)) in sp.iter_mut().zip(row).enumerate() {
                        let p = (lv - lse).exp();
                        let indicator = if j == t { S::one() } else { S::zero() };
                        *o += w * (p - indicator);
                    }
                }
            });
        });
        Ok(self.push(out, rg, vec![logits], Some(back)))
    }

    /// Runs the reverse sweep from a scalar loss node. Each recorded op is
    /// visited exactly once, in reverse recording order.
    pub fn backward(&self, loss: TensorId) -> Result<Grads<S>> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Tape(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads = Grads {
            slots: vec![None; self.nodes.len()],
        };
        grads.slots[loss] = Some(vec![S::one()]);
        for id in (0..=loss).rev() {
            let node = &self.nodes[id];
            let Some(back) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads.slots[id].take() else {
                continue;
            };
            back(&g, &mut grads);
        }
        Ok(grads)
    }
}
