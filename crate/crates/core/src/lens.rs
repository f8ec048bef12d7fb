// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-latent measurements: logit lens, entropy, token energy, lens
//! distance and attention/MLP probability deltas.

use thiserror::Error;

use crate::langmeter::LanguageTokenSet;
use crate::model::{LatentTrace, ModelBundle};
use crate::scalar::{norm_sq, Scalar};

/// `-ln P` reported when a token's probability underflows to zero.
pub const DEFAULT_DISTANCE_CAP: f64 = 1e9;

#[derive(Debug, Error, PartialEq)]
pub enum LensError {
    #[error("layer {layer} out of range (model has {layers} layers)")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("position {position} out of range (sequence length {len})")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("token energy is undefined for a zero latent")]
    ZeroLatent,
    #[error("token energy is undefined for an all-zero unembedding")]
    DegenerateUnembedding,
    #[error("token {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
}

/// Next-token distribution decoded from one latent.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    pub probs: Vec<f64>,
    pub layer: usize,
    pub position: usize,
}

impl NextTokenDistribution {
    /// Numerically stable softmax of `logits`, accumulated in `f64`.
    pub fn from_logits<T: Scalar>(logits: &[T], layer: usize, position: usize) -> Self {
        let logits: Vec<f64> = logits.iter().map(|x| x.to_f64_lossy()).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self {
            probs,
            layer,
            position,
        }
    }

    pub fn prob(&self, token: u32) -> f64 {
        self.probs.get(token as usize).copied().unwrap_or(0.0)
    }

    /// Highest-probability token; ties go to the lower id.
    pub fn argmax(&self) -> u32 {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as u32
    }
}

/// Decodes an arbitrary latent through the model head.
pub fn decode_latent<T: Scalar>(
    model: &ModelBundle<T>,
    latent: &[T],
    layer: usize,
    position: usize,
) -> NextTokenDistribution {
    NextTokenDistribution::from_logits(&model.head_logits(latent), layer, position)
}

/// Final RMS-norm, unembedding and softmax applied to `h_position^(layer)`.
/// At `layer == m` this is the model's own output distribution.
pub fn logit_lens<T: Scalar>(
    model: &ModelBundle<T>,
    trace: &LatentTrace<T>,
    layer: usize,
    position: usize,
) -> Result<NextTokenDistribution, LensError> {
    check_indices(trace, layer, position)?;
    Ok(decode_latent(
        model,
        trace.latent(layer, position),
        layer,
        position,
    ))
}

/// The model's next-token distribution at `position`.
pub fn head_distribution<T: Scalar>(
    model: &ModelBundle<T>,
    trace: &LatentTrace<T>,
    position: usize,
) -> Result<NextTokenDistribution, LensError> {
    logit_lens(model, trace, trace.n_layers(), position)
}

fn check_indices<T: Scalar>(
    trace: &LatentTrace<T>,
    layer: usize,
    position: usize,
) -> Result<(), LensError> {
    if layer > trace.n_layers() {
        return Err(LensError::LayerOutOfRange {
            layer,
            layers: trace.n_layers(),
        });
    }
    if position >= trace.len() {
        return Err(LensError::PositionOutOfRange {
            position,
            len: trace.len(),
        });
    }
    Ok(())
}

/// Shannon entropy in bits, `0 · log 0 = 0`.
pub fn entropy_bits(dist: &NextTokenDistribution) -> f64 {
    0.0 - dist
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// Token energy `E(h)`: mean squared cosine between `h` and the normalised
/// unembedding rows, relative to the same quantity among the rows themselves.
///
/// `E(h)² = v · ‖Ûh‖² / (‖h‖² · ‖ÛÛᵀ‖_F²)`, evaluated as
/// `v · hᵀ(ÛᵀÛ)h / (‖h‖² · ‖ÛᵀÛ‖_F²)` with the cached d × d Gram matrix.
pub fn token_energy<T: Scalar>(model: &ModelBundle<T>, latent: &[T]) -> Result<T, LensError> {
    let gram = model.token_gram();
    let h_sq = norm_sq(latent);
    if h_sq == T::zero() {
        return Err(LensError::ZeroLatent);
    }
    if gram.frobenius_sq == T::zero() {
        return Err(LensError::DegenerateUnembedding);
    }
    let v = T::from_usize(gram.vocab_size).expect("vocab fits");
    let scale = v / (h_sq * gram.frobenius_sq);
    let mut e_sq = scale * norm_sq_quadratic(&gram.gram, latent);
    // The quadratic form carries absolute rounding error near machine
    // epsilon, which the square root would inflate to ~sqrt(eps) for
    // near-orthogonal latents. Re-evaluate ‖Ûh‖² row by row there.
    if e_sq < T::epsilon().sqrt() * T::lit(100.0) {
        let u = model.unembedding();
        let direct = gram
            .inv_row_norms
            .iter()
            .enumerate()
            .map(|(t, &inv)| {
                let p = crate::scalar::dot(u.row(t), latent) * inv;
                p * p
            })
            .sum::<T>();
        e_sq = scale * direct;
    }
    // hᵀGh is a sum of squares; clamp the rounding-induced negatives.
    Ok(e_sq.max(T::zero()).sqrt())
}

fn norm_sq_quadratic<T: Scalar>(gram: &crate::tensor::Matrix<T>, h: &[T]) -> T {
    gram.matvec(h)
        .iter()
        .zip(h)
        .fold(T::zero(), |acc, (&gh, &x)| acc + gh * x)
}

/// `-ln P(token)`, with zero probability mapped to `cap`.
pub fn lens_distance(dist: &NextTokenDistribution, token: u32, cap: f64) -> Result<f64, LensError> {
    let p = *dist
        .probs
        .get(token as usize)
        .ok_or(LensError::TokenOutOfRange {
            token,
            vocab: dist.probs.len(),
        })?;
    if p <= 0.0 {
        return Ok(cap);
    }
    Ok((-p.ln()).min(cap).max(0.0))
}

/// Change of the set's lens probability mass inside block `layer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SublayerDelta {
    pub layer: usize,
    /// `P_set(after attention) − P_set(h^(layer−1))`.
    pub attn: f64,
    /// `P_set(h^(layer)) − P_set(after attention)`.
    pub mlp: f64,
}

fn set_mass(dist: &NextTokenDistribution, set: &LanguageTokenSet) -> f64 {
    set.token_ids.iter().map(|&t| dist.prob(t)).sum()
}

/// Splits each block's change in the set's lens probability into its
/// attention and MLP parts. `attn + mlp` telescopes to the block's total change.
pub fn sublayer_deltas<T: Scalar>(
    model: &ModelBundle<T>,
    trace: &LatentTrace<T>,
    position: usize,
    set: &LanguageTokenSet,
) -> Result<Vec<SublayerDelta>, LensError> {
    check_indices(trace, 0, position)?;
    let mass =
        |latent: &[T], layer: usize| set_mass(&decode_latent(model, latent, layer, position), set);
    let mut before = mass(trace.latent(0, position), 0);
    let mut out = Vec::with_capacity(trace.n_layers());
    for layer in 1..=trace.n_layers() {
        let mid = mass(trace.post_attention(layer, position), layer);
        let after = mass(trace.latent(layer, position), layer);
        out.push(SublayerDelta {
            layer,
            attn: mid - before,
            mlp: after - mid,
        });
        before = after;
    }
    Ok(out)
}
