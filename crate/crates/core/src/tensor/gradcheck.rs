//! Central-finite-difference gradient verification.

use super::{Result, Scalar, Tape, Tensor, TensorError, TensorId};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tol: f64,
    pub n_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Compares the tape gradient of a scalar-valued `f` at `x` against central
/// finite differences. The relative error denominator floors at 1 so that
/// near-zero gradients compare absolutely.
pub fn grad_check<S, F>(f: F, x: &Tensor<S>, tol: f64) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, TensorId) -> Result<TensorId>,
{
    let mut tape = Tape::new();
    let xid = tape.leaf(&x.clone().requires_grad(true));
    let out = f(&mut tape, xid)?;
    let y = tape.value(out);
    if y.numel() != 1 {
        return Err(TensorError::Tape(format!(
            "grad_check requires scalar-valued f, got shape {:?}",
            y.shape()
        )));
    }
    if !y.is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    let grads = tape.backward(out)?;
    let analytic = grads.dense(xid, x.numel());

    let eval = |pt: &Tensor<S>| -> Result<f64> {
        let mut t = Tape::new();
        let id = t.leaf(pt);
        let o = f(&mut t, id)?;
        let v = t.value(o);
        if !v.is_finite() {
            return Err(TensorError::NonFinite { op: "grad_check" });
        }
        Ok(v.item().to_f64_c())
    };

    // Cube-root-of-epsilon step, scaled per coordinate.
    let base = S::epsilon().to_f64_c().cbrt();
    let mut max_rel = 0.0f64;
    let data = x.data().to_vec();
    for i in 0..data.len() {
        let h = base * data[i].to_f64_c().abs().max(1.0);
        let mut plus = data.clone();
        plus[i] = S::from_f64_c(plus[i].to_f64_c() + h);
        let mut minus = data.clone();
        minus[i] = S::from_f64_c(minus[i].to_f64_c() - h);
        let fp = eval(&Tensor::new(plus, x.shape().to_vec())?)?;
        let fm = eval(&Tensor::new(minus, x.shape().to_vec())?)?;
        let fd = (fp - fm) / (2.0 * h);
        let a = analytic[i].to_f64_c();
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        tol,
        n_checked: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn sum_gradient_exact() {
        let x = rand_tensor(vec![5], 1);
        let report = grad_check(|t, x| Ok(t.sum(x)), &x, 1e-8).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn square_sum_hand_derivative() {
        let x = Tensor::new(vec![1.0, 2.0], vec![2]).unwrap();
        let report = grad_check(
            |t, x| {
                let sq = t.mul_elem(x, x)?;
                Ok(t.sum(sq))
            },
            &x,
            1e-7,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn matmul_gradient_vs_fd() {
        // Random 5x7 input against a fixed 7x3 weight, summed to scalar.
        let w = rand_tensor(vec![7, 3], 2);
        let x = rand_tensor(vec![5, 7], 3);
        let report = grad_check(
            |t, x| {
                let wid = t.leaf(&w);
                let y = t.matmul(x, wid)?;
                Ok(t.sum(y))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn matmul_weight_gradient_vs_fd() {
        let x = rand_tensor(vec![5, 7], 4);
        let w = rand_tensor(vec![7, 3], 5);
        let report = grad_check(
            |t, w| {
                let xid = t.leaf(&x);
                let y = t.matmul(xid, w)?;
                Ok(t.sum(y))
            },
            &w,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn softmax_gradient_vs_fd() {
        let x = rand_tensor(vec![6], 6);
        let w = rand_tensor(vec![6], 7);
        let report = grad_check(
            |t, x| {
                let p = t.softmax_last(x)?;
                let wid = t.leaf(&w);
                let y = t.mul_elem(p, wid)?;
                Ok(t.sum(y))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn causal_softmax_gradient_vs_fd() {
        let x = rand_tensor(vec![5, 5], 8);
        let w = rand_tensor(vec![5, 5], 9);
        let report = grad_check(
            |t, x| {
                let p = t.causal_softmax(x)?;
                let wid = t.leaf(&w);
                let y = t.mul_elem(p, wid)?;
                Ok(t.sum(y))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn rms_norm_gradient_vs_fd() {
        let x = rand_tensor(vec![3, 6], 10);
        let gain = rand_tensor(vec![6], 11);
        let w = rand_tensor(vec![3, 6], 12);
        let report = grad_check(
            |t, x| {
                let gid = t.leaf(&gain);
                let y = t.rms_norm(x, gid, 1e-6)?;
                let wid = t.leaf(&w);
                let z = t.mul_elem(y, wid)?;
                Ok(t.sum(z))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn rms_norm_gain_gradient_vs_fd() {
        let x = rand_tensor(vec![3, 6], 13);
        let gain = rand_tensor(vec![6], 14);
        let report = grad_check(
            |t, g| {
                let xid = t.leaf(&x);
                let y = t.rms_norm(xid, g, 1e-6)?;
                Ok(t.sum(y))
            },
            &gain,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn cross_entropy_gradient_vs_fd() {
        let logits = rand_tensor(vec![4, 10], 15);
        let targets = [2usize, 7, 0, 9];
        let report = grad_check(
            |t, l| t.cross_entropy(l, &targets, None),
            &logits,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn weighted_cross_entropy_gradient_vs_fd() {
        let logits = rand_tensor(vec![3, 6], 16);
        let targets = [1usize, 4, 2];
        let weights = [1.0, 0.25, 0.5];
        let report = grad_check(
            |t, l| t.cross_entropy(l, &targets, Some(&weights)),
            &logits,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn silu_and_projection_chain_vs_fd() {
        let x = rand_tensor(vec![4, 8], 17);
        let w1 = rand_tensor(vec![16, 8], 18);
        let w2 = rand_tensor(vec![8, 16], 19);
        let report = grad_check(
            |t, x| {
                let w1id = t.leaf(&w1);
                let w2id = t.leaf(&w2);
                let h = t.matmul_transb(x, w1id)?;
                let a = t.silu(h);
                let y = t.matmul_transb(a, w2id)?;
                Ok(t.sum(y))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn slice_concat_gather_chain_vs_fd() {
        let table = rand_tensor(vec![6, 8], 20);
        let report = grad_check(
            |t, table| {
                let rows = t.gather_rows(table, &[1, 3, 3, 5])?;
                let left = t.slice_cols(rows, 0, 4)?;
                let right = t.slice_cols(rows, 4, 4)?;
                let swapped = t.concat_cols(&[right, left])?;
                let sq = t.mul_elem(swapped, swapped)?;
                Ok(t.sum(sq))
            },
            &table,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn non_finite_function_is_error() {
        let x = Tensor::new(vec![1.0f64], vec![1]).unwrap();
        let err = grad_check(
            |t, x| {
                let inf = t.leaf(&Tensor::new(vec![f64::INFINITY], vec![1]).unwrap());
                t.add(x, inf)
            },
            &x,
            1e-4,
        )
        .unwrap_err();
        assert!(matches!(err, TensorError::NonFinite { .. }));
    }
}
