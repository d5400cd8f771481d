//! Pre-norm decoder-only transformer over plain tensors, with residual-edit
//! and capture hooks on every block.
//!
//! Blocks are bias-free: rms_norm → attention → residual add, rms_norm →
//! SiLU MLP → residual add. "Layer ℓ residual" always means the stream
//! after block ℓ completes, the convention shared by capture and steering.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{ops, Scalar, Tensor};

use super::{ModelConfig, ModelError, Result};

pub const RMS_EPS: f64 = 1e-6;

const INIT_STD: f64 = 0.02;

/// Per-block parameter view in declaration order.
pub struct BlockView<'a, S: Scalar> {
    pub attn_gain: &'a Tensor<S>,
    pub wq: &'a Tensor<S>,
    pub wk: &'a Tensor<S>,
    pub wv: &'a Tensor<S>,
    pub wo: &'a Tensor<S>,
    pub mlp_gain: &'a Tensor<S>,
    pub w1: &'a Tensor<S>,
    pub w2: &'a Tensor<S>,
}

const BLOCK_TENSORS: usize = 8;

/// Model parameters: a flat tensor list in declaration order
/// `[tok_embed, pos_embed, blocks..., final_gain, unembed]`, the order the
/// checkpoint format serializes.
#[derive(Clone)]
pub struct Params<S: Scalar> {
    pub cfg: ModelConfig,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Params<S> {
    pub fn from_tensors(cfg: ModelConfig, tensors: Vec<Tensor<S>>) -> Result<Self> {
        cfg.validate()?;
        let expected = 2 + cfg.n_layers * BLOCK_TENSORS + 2;
        if tensors.len() != expected {
            return Err(ModelError::InvalidConfig(format!(
                "expected {expected} parameter tensors, got {}",
                tensors.len()
            )));
        }
        Ok(Self { cfg, tensors })
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn set_tensors(&mut self, tensors: Vec<Tensor<S>>) {
        debug_assert_eq!(tensors.len(), self.tensors.len());
        self.tensors = tensors;
    }

    pub fn tok_embed(&self) -> &Tensor<S> {
        &self.tensors[0]
    }

    pub fn pos_embed(&self) -> &Tensor<S> {
        &self.tensors[1]
    }

    pub fn block(&self, l: usize) -> BlockView<'_, S> {
        let b = 2 + l * BLOCK_TENSORS;
        BlockView {
            attn_gain: &self.tensors[b],
            wq: &self.tensors[b + 1],
            wk: &self.tensors[b + 2],
            wv: &self.tensors[b + 3],
            wo: &self.tensors[b + 4],
            mlp_gain: &self.tensors[b + 5],
            w1: &self.tensors[b + 6],
            w2: &self.tensors[b + 7],
        }
    }

    pub fn final_gain(&self) -> &Tensor<S> {
        &self.tensors[2 + self.cfg.n_layers * BLOCK_TENSORS]
    }

    pub fn unembed(&self) -> &Tensor<S> {
        &self.tensors[3 + self.cfg.n_layers * BLOCK_TENSORS]
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Tensor shapes in declaration order, used by the checkpoint reader
    /// and the flat-parameter gradient check.
    pub fn shapes(cfg: &ModelConfig) -> Vec<Vec<usize>> {
        let (d, ff, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
        let mut shapes = vec![vec![v, d], vec![cfg.max_seq, d]];
        for _ in 0..cfg.n_layers {
            shapes.push(vec![d]);
            shapes.push(vec![d, d]);
            shapes.push(vec![d, d]);
            shapes.push(vec![d, d]);
            shapes.push(vec![d, d]);
            shapes.push(vec![d]);
            shapes.push(vec![ff, d]);
            shapes.push(vec![d, ff]);
        }
        shapes.push(vec![d]);
        shapes.push(vec![v, d]);
        shapes
    }
}

/// Fresh parameters: normal(0, 0.02) embeddings and projections, zero-init
/// output projections, unit gains. Deterministic in `cfg.seed`.
pub fn init_params<S: Scalar>(cfg: &ModelConfig) -> Result<Params<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0f64, INIT_STD).expect("valid init std");
    let mut randn = |shape: Vec<usize>| -> Tensor<S> {
        Tensor::from_fn(shape, |_| S::from_f64_c(normal.sample(&mut rng)))
    };
    let (d, ff, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let mut tensors = Vec::new();
    tensors.push(randn(vec![v, d]));
    tensors.push(randn(vec![cfg.max_seq, d]));
    for _ in 0..cfg.n_layers {
        tensors.push(Tensor::filled(S::one(), vec![d]));
        tensors.push(randn(vec![d, d]));
        tensors.push(randn(vec![d, d]));
        tensors.push(randn(vec![d, d]));
        tensors.push(Tensor::zeros(vec![d, d]));
        tensors.push(Tensor::filled(S::one(), vec![d]));
        tensors.push(randn(vec![ff, d]));
        tensors.push(Tensor::zeros(vec![d, ff]));
    }
    tensors.push(Tensor::filled(S::one(), vec![d]));
    tensors.push(randn(vec![v, d]));
    Params::from_tensors(cfg.clone(), tensors)
}

/// Edits the post-block residual stream; the returned tensor replaces it
/// before subsequent computation.
pub trait ResidualEdit<S: Scalar>: Sync {
    fn edit(&self, layer: usize, resid: Tensor<S>) -> Tensor<S>;
}

/// Capture callbacks, invoked in layer order at each hook site.
pub trait CaptureSink<S: Scalar> {
    fn attention(&mut self, _layer: usize, _head_probs: &[Tensor<S>]) {}
    fn mlp_out(&mut self, _layer: usize, _mlp: &Tensor<S>) {}
    fn residual(&mut self, _layer: usize, _resid: &Tensor<S>) {}
}

struct NoCapture;
impl<S: Scalar> CaptureSink<S> for NoCapture {}

fn final_normed<S: Scalar>(
    params: &Params<S>,
    tokens: &[u32],
    edit: Option<&dyn ResidualEdit<S>>,
    mut capture: Option<&mut dyn CaptureSink<S>>,
) -> Result<Tensor<S>> {
    let cfg = &params.cfg;
    let t = tokens.len();
    if t == 0 {
        return Err(ModelError::InvalidConfig("empty token sequence".into()));
    }
    if t > cfg.max_seq {
        return Err(ModelError::TooLong {
            len: t,
            max_seq: cfg.max_seq,
        });
    }
    let ids: Vec<usize> = tokens.iter().map(|&x| x as usize).collect();
    let pos: Vec<usize> = (0..t).collect();
    let eps = S::from_f64_c(RMS_EPS);
    let dh = cfg.head_dim();
    let inv_sqrt_dh = S::from_f64_c(1.0 / (dh as f64).sqrt());

    let tok = ops::gather_rows(params.tok_embed(), &ids)?;
    let pe = ops::gather_rows(params.pos_embed(), &pos)?;
    let mut x = ops::add(&tok, &pe)?;

    for l in 0..cfg.n_layers {
        let blk = params.block(l);
        let xn = ops::rms_norm(&x, blk.attn_gain, eps)?;
        let q = ops::matmul_transb(&xn, blk.wq)?;
        let k = ops::matmul_transb(&xn, blk.wk)?;
        let v = ops::matmul_transb(&xn, blk.wv)?;
        let mut head_probs = Vec::with_capacity(cfg.n_heads);
        let mut head_ctx = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let qh = ops::slice_cols(&q, h * dh, dh)?;
            let kh = ops::slice_cols(&k, h * dh, dh)?;
            let vh = ops::slice_cols(&v, h * dh, dh)?;
            let scores = ops::scale(&ops::matmul_transb(&qh, &kh)?, inv_sqrt_dh);
            let probs = ops::causal_softmax(&scores)?;
            head_ctx.push(ops::matmul(&probs, &vh)?);
            head_probs.push(probs);
        }
        if let Some(c) = capture.as_deref_mut() {
            c.attention(l, &head_probs);
        }
        let ctx_refs: Vec<&Tensor<S>> = head_ctx.iter().collect();
        let ctx = ops::concat_cols(&ctx_refs)?;
        let attn_out = ops::matmul_transb(&ctx, blk.wo)?;
        x = ops::add(&x, &attn_out)?;

        let xn2 = ops::rms_norm(&x, blk.mlp_gain, eps)?;
        let hidden = ops::silu(&ops::matmul_transb(&xn2, blk.w1)?);
        let mlp = ops::matmul_transb(&hidden, blk.w2)?;
        if let Some(c) = capture.as_deref_mut() {
            c.mlp_out(l, &mlp);
        }
        x = ops::add(&x, &mlp)?;

        if let Some(e) = edit {
            x = e.edit(l, x);
        }
        if let Some(c) = capture.as_deref_mut() {
            c.residual(l, &x);
        }
    }
    Ok(ops::rms_norm(&x, params.final_gain(), eps)?)
}

/// Full forward pass: logits for every position, `[seq, vocab]`.
pub fn forward<S: Scalar>(
    params: &Params<S>,
    tokens: &[u32],
    edit: Option<&dyn ResidualEdit<S>>,
    capture: Option<&mut dyn CaptureSink<S>>,
) -> Result<Tensor<S>> {
    let normed = final_normed(params, tokens, edit, capture)?;
    Ok(ops::matmul_transb(&normed, params.unembed())?)
}

/// Decode fast path: logits of the final position only, bitwise equal to
/// the last row of [`forward`].
pub fn forward_last<S: Scalar>(
    params: &Params<S>,
    tokens: &[u32],
    edit: Option<&dyn ResidualEdit<S>>,
    capture: Option<&mut dyn CaptureSink<S>>,
) -> Result<Tensor<S>> {
    let normed = final_normed(params, tokens, edit, capture)?;
    let t = normed.dim(0);
    let last = Tensor::new(normed.row(t - 1).to_vec(), vec![1, normed.dim(1)])?;
    let logits = ops::matmul_transb(&last, params.unembed())?;
    Tensor::new(logits.to_vec(), vec![params.cfg.vocab_size]).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(seed: u64) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
            vocab_size: 23,
            max_seq: 12,
            seed,
        }
    }

    struct Identity;
    impl<S: Scalar> ResidualEdit<S> for Identity {
        fn edit(&self, _layer: usize, resid: Tensor<S>) -> Tensor<S> {
            resid
        }
    }

    struct ZeroAt(usize);
    impl<S: Scalar> ResidualEdit<S> for ZeroAt {
        fn edit(&self, layer: usize, resid: Tensor<S>) -> Tensor<S> {
            if layer == self.0 {
                Tensor::zeros(resid.shape().to_vec())
            } else {
                resid
            }
        }
    }

    struct AttnGrab {
        rows_ok: bool,
        captured: usize,
    }
    impl CaptureSink<f64> for AttnGrab {
        fn attention(&mut self, _layer: usize, head_probs: &[Tensor<f64>]) {
            for p in head_probs {
                let t = p.dim(0);
                for i in 0..t {
                    let mut sum = 0.0;
                    for j in 0..t {
                        let v = p.data()[i * t + j];
                        if j > i && v != 0.0 {
                            self.rows_ok = false;
                        }
                        sum += v;
                    }
                    if (sum - 1.0).abs() > 1e-6 {
                        self.rows_ok = false;
                    }
                }
                self.captured += 1;
            }
        }
    }

    #[test]
    fn identity_edit_is_bitwise_noop() {
        let params = init_params::<f64>(&tiny_cfg(5)).unwrap();
        let tokens = [1u32, 4, 9, 2, 2, 7];
        let plain = forward(&params, &tokens, None, None).unwrap();
        let hooked = forward(&params, &tokens, Some(&Identity), None).unwrap();
        assert!(plain.bit_eq(&hooked));
    }

    #[test]
    fn attention_rows_causal_and_normalized() {
        let params = init_params::<f64>(&tiny_cfg(6)).unwrap();
        let tokens = [3u32, 1, 4, 1, 5];
        let mut grab = AttnGrab { rows_ok: true, captured: 0 };
        forward(&params, &tokens, None, Some(&mut grab)).unwrap();
        assert!(grab.rows_ok);
        assert_eq!(grab.captured, 2 * 2); // layers x heads
    }

    #[test]
    fn zeroed_layer0_residual_matches_zeroed_embeddings() {
        // Blocks are bias-free and zero-preserving, so zeroing the stream
        // after block 0 must equal running blocks 1.. on zeroed embeddings.
        let cfg = tiny_cfg(7);
        let params = init_params::<f64>(&cfg).unwrap();
        let tokens = [2u32, 8, 1, 0, 6];
        let zeroed = forward(&params, &tokens, Some(&ZeroAt(0)), None).unwrap();

        // Independent recomputation: embeddings zeroed, all blocks run.
        let mut zero_emb_params = params.clone();
        let mut tensors = zero_emb_params.tensors().to_vec();
        tensors[0] = Tensor::zeros(tensors[0].shape().to_vec());
        tensors[1] = Tensor::zeros(tensors[1].shape().to_vec());
        zero_emb_params.set_tensors(tensors);
        let reference = forward(&zero_emb_params, &tokens, None, None).unwrap();
        assert!(zeroed.bit_eq(&reference));
    }

    #[test]
    fn causality_suffix_perturbation_leaves_prefix_exact() {
        let params = init_params::<f64>(&tiny_cfg(8)).unwrap();
        let a = [5u32, 3, 7, 1, 2, 9];
        let mut b = a;
        b[4] = 11;
        b[5] = 13;
        let la = forward(&params, &a, None, None).unwrap();
        let lb = forward(&params, &b, None, None).unwrap();
        let v = la.dim(1);
        for p in 0..4 {
            for j in 0..v {
                let (x, y) = (la.data()[p * v + j], lb.data()[p * v + j]);
                assert_eq!(x.to_bits(), y.to_bits(), "position {p} changed");
            }
        }
    }

    #[test]
    fn forward_last_matches_forward_row() {
        let params = init_params::<f64>(&tiny_cfg(9)).unwrap();
        let tokens = [1u32, 2, 3, 4];
        let full = forward(&params, &tokens, None, None).unwrap();
        let last = forward_last(&params, &tokens, None, None).unwrap();
        let v = full.dim(1);
        for j in 0..v {
            assert_eq!(
                full.data()[(tokens.len() - 1) * v + j].to_bits(),
                last.data()[j].to_bits()
            );
        }
    }

    #[test]
    fn too_long_sequence_errors() {
        let params = init_params::<f64>(&tiny_cfg(1)).unwrap();
        let tokens = vec![0u32; 13];
        assert!(matches!(
            forward(&params, &tokens, None, None),
            Err(ModelError::TooLong { .. })
        ));
    }
}
