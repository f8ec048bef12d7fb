// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-norm decoder forward pass with full residual-stream capture.
//!
//! Each block computes
//!
//! ```text
//! mid   = h + Wo · attn(rope(Wq·n1), rope(Wk·n1), Wv·n1)    n1 = rmsnorm(h)
//! h'    = mid + W2 · (silu(W1·n2) ⊙ W3·n2)                   n2 = rmsnorm(mid)
//! ```
//!
//! with causal masking, rotary embeddings on interleaved pairs, and key/value
//! heads shared across `n_heads / n_kv_heads` query heads.

use super::{LayerWeights, ModelBundle, ModelConfig, ModelError};
use crate::scalar::{dot, Scalar};

/// Dense `(layers, positions, dim)` activation block.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations<T> {
    layers: usize,
    positions: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Activations<T> {
    fn zeros(layers: usize, positions: usize, dim: usize) -> Self {
        Self {
            layers,
            positions,
            dim,
            data: vec![T::zero(); layers * positions * dim],
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, layer: usize, position: usize) -> &[T] {
        let start = (layer * self.positions + position) * self.dim;
        &self.data[start..start + self.dim]
    }

    fn get_mut(&mut self, layer: usize, position: usize) -> &mut [T] {
        let start = (layer * self.positions + position) * self.dim;
        &mut self.data[start..start + self.dim]
    }
}

/// Everything a forward pass produced.
///
/// `latents` has `m + 1` layers: layer 0 is the embedding lookup and layer
/// `j` the output of block `j`. The per-block arrays have `m` layers, so block
/// `j` lives at index `j - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrace<T> {
    pub tokens: Vec<u32>,
    pub latents: Activations<T>,
    /// Residual state after the attention sublayer (`h + attn`).
    pub attn_out: Activations<T>,
    pub attn_residual: Activations<T>,
    pub mlp_residual: Activations<T>,
}

impl<T: Scalar> LatentTrace<T> {
    pub fn n_layers(&self) -> usize {
        self.latents.layers() - 1
    }

    pub fn len(&self) -> usize {
        self.latents.positions()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn final_position(&self) -> usize {
        self.len() - 1
    }

    /// `h_position^(layer)`, `layer` in `0..=m`.
    pub fn latent(&self, layer: usize, position: usize) -> &[T] {
        self.latents.get(layer, position)
    }

    /// Post-attention residual state of block `layer` (`1..=m`).
    pub fn post_attention(&self, layer: usize, position: usize) -> &[T] {
        self.attn_out.get(layer - 1, position)
    }
}

pub fn rms_normalize<T: Scalar>(x: &[T], gain: &[T], eps: T) -> Vec<T> {
    debug_assert_eq!(x.len(), gain.len());
    let n = T::from_usize(x.len()).expect("length fits");
    let mean_sq = x.iter().map(|&v| v * v).sum::<T>() / n;
    let scale = (mean_sq + eps).sqrt().recip();
    x.iter().zip(gain).map(|(&v, &g)| g * (v * scale)).collect()
}

fn silu<T: Scalar>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

/// Rotates consecutive pairs of every head in place.
fn apply_rope<T: Scalar>(v: &mut [T], head_dim: usize, position: usize, theta: f64) {
    for head in v.chunks_exact_mut(head_dim) {
        for i in (0..head_dim).step_by(2) {
            let freq = theta.powf(-(i as f64) / head_dim as f64);
            let (sin, cos) = (position as f64 * freq).sin_cos();
            let (sin, cos) = (T::lit(sin), T::lit(cos));
            let (a, b) = (head[i], head[i + 1]);
            head[i] = a * cos - b * sin;
            head[i + 1] = a * sin + b * cos;
        }
    }
}

fn check_tokens(config: &ModelConfig, tokens: &[u32]) -> Result<(), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if tokens.len() > config.max_seq {
        return Err(ModelError::SequenceTooLong {
            len: tokens.len(),
            max: config.max_seq,
        });
    }
    if let Some(&id) = tokens.iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab: config.vocab_size,
        });
    }
    Ok(())
}

/// Causal self-attention for every position of one block. Returns the
/// `Wo`-projected residual per position.
fn attention<T: Scalar>(
    config: &ModelConfig,
    layer: &LayerWeights<T>,
    normed: &[Vec<T>],
) -> Vec<Vec<T>> {
    let head_dim = config.head_dim();
    let group = config.n_heads / config.n_kv_heads;
    let scale = T::lit(1.0 / (head_dim as f64).sqrt());

    let mut qs = Vec::with_capacity(normed.len());
    let mut ks = Vec::with_capacity(normed.len());
    let mut vs = Vec::with_capacity(normed.len());
    for (pos, x) in normed.iter().enumerate() {
        let mut q = layer.wq.matvec(x);
        let mut k = layer.wk.matvec(x);
        apply_rope(&mut q, head_dim, pos, config.rope_theta);
        apply_rope(&mut k, head_dim, pos, config.rope_theta);
        qs.push(q);
        ks.push(k);
        vs.push(layer.wv.matvec(x));
    }

    let mut out = Vec::with_capacity(normed.len());
    let mut scores = Vec::with_capacity(normed.len());
    for (pos, q) in qs.iter().enumerate() {
        let mut mixed = vec![T::zero(); config.dim];
        for head in 0..config.n_heads {
            let kv = head / group;
            let qh = &q[head * head_dim..(head + 1) * head_dim];
            scores.clear();
            scores.extend(
                ks[..=pos]
                    .iter()
                    .map(|k| dot(qh, &k[kv * head_dim..(kv + 1) * head_dim]) * scale),
            );
            let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                total = total + *s;
            }
            let dst = &mut mixed[head * head_dim..(head + 1) * head_dim];
            for (w, v) in scores.iter().zip(&vs[..=pos]) {
                let w = *w / total;
                for (o, &x) in dst.iter_mut().zip(&v[kv * head_dim..(kv + 1) * head_dim]) {
                    *o = *o + w * x;
                }
            }
        }
        out.push(layer.wo.matvec(&mixed));
    }
    out
}

fn gated_mlp<T: Scalar>(layer: &LayerWeights<T>, x: &[T]) -> Vec<T> {
    let gate = layer.w1.matvec(x);
    let up = layer.w3.matvec(x);
    let hidden: Vec<T> = gate.iter().zip(&up).map(|(&g, &u)| silu(g) * u).collect();
    layer.w2.matvec(&hidden)
}

/// Runs the model over `tokens` and records every residual-stream state.
pub fn forward<T: Scalar>(
    model: &ModelBundle<T>,
    tokens: &[u32],
) -> Result<LatentTrace<T>, ModelError> {
    let config = model.config();
    check_tokens(config, tokens)?;
    let (n, d, m) = (tokens.len(), config.dim, config.n_layers);
    let eps = T::lit(config.norm_eps);
    let weights = model.weights();

    let mut latents = Activations::zeros(m + 1, n, d);
    let mut attn_out = Activations::zeros(m, n, d);
    let mut attn_residual = Activations::zeros(m, n, d);
    let mut mlp_residual = Activations::zeros(m, n, d);

    for (pos, &tok) in tokens.iter().enumerate() {
        latents
            .get_mut(0, pos)
            .copy_from_slice(weights.tok_embeddings.row(tok as usize));
    }

    for (j, layer) in weights.layers.iter().enumerate() {
        let normed: Vec<Vec<T>> = (0..n)
            .map(|pos| rms_normalize(latents.get(j, pos), &layer.attn_norm, eps))
            .collect();
        let attn = attention(config, layer, &normed);
        for (pos, a) in attn.into_iter().enumerate() {
            let mid: Vec<T> = latents
                .get(j, pos)
                .iter()
                .zip(&a)
                .map(|(&h, &r)| h + r)
                .collect();
            let mlp = gated_mlp(layer, &rms_normalize(&mid, &layer.ffn_norm, eps));
            let next = latents.get_mut(j + 1, pos);
            for ((dst, &h), &r) in next.iter_mut().zip(&mid).zip(&mlp) {
                *dst = h + r;
            }
            attn_residual.get_mut(j, pos).copy_from_slice(&a);
            attn_out.get_mut(j, pos).copy_from_slice(&mid);
            mlp_residual.get_mut(j, pos).copy_from_slice(&mlp);
        }
    }

    Ok(LatentTrace {
        tokens: tokens.to_vec(),
        latents,
        attn_out,
        attn_residual,
        mlp_residual,
    })
}
