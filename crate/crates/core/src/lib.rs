//! Desk-scale workbench for studying how a small transformer arbitrates
//! between memorized facts and contextual evidence.
//!
//! The crate trains a word-level decoder-only transformer that holds both
//! parametric knowledge (a synthetic fact base memorized into its weights)
//! and contextual-copying ability, then extracts an arbitration vector as
//! the centroid difference between irrelevant-context and relevant-context
//! activations and injects it additively into the residual stream to steer
//! the model between Copy→Recall and Recall→Copy regimes.
//!
//! Modules follow the pipeline order:
//!
//! - [`tensor`]: dense tensors with reverse-mode gradients and a
//!   finite-difference checker,
//! - [`synthkb`]: synthetic knowledge base, arbitration dataset, and
//!   evaluation benchmarks,
//! - [`model`]: tokenizer, transformer with an exposed residual stream,
//!   training loop, and greedy decoder,
//! - [`capture`]: pooled per-location hidden-state capture,
//! - [`arbitration`]: centroids, arbitration vectors, additive steering,
//!   and layer×alpha sweeps,
//! - [`probes`]: attention routing, MLP projections, probability
//!   trajectories, and perplexity,
//! - [`evalharness`]: EM/F1 scoring, baseline-vs-steered evaluation, and
//!   asymmetry reporting.

pub mod arbitration;
pub mod capture;
pub mod evalharness;
pub mod model;
pub mod probes;
pub mod synthkb;
pub mod tensor;
