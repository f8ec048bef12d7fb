// SPDX-License-Identifier: MIT OR Apache-2.0

//! Decoder-only transformer: configuration, weights, the `LLENS1` weight
//! file and a forward pass that records the whole residual stream.

mod format;
mod forward;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub use format::{load_model, read_model, save_model, write_model, MAGIC};
pub use forward::{forward, rms_normalize, Activations, LatentTrace};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: file does not start with \"LLENS1\\n\"")]
    BadMagic,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unknown or duplicate tensor `{0}`")]
    UnknownTensor(String),
    #[error("tensor `{name}` has a non-finite value at flat index {index}")]
    NonFinite { name: String, index: usize },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("empty token sequence")]
    EmptyInput,
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("sequence of {len} tokens exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Number of transformer blocks `m`.
    pub n_layers: usize,
    /// Vocabulary size `v`.
    pub vocab_size: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    /// Width of the gated MLP.
    pub ffn_hidden: usize,
    pub rope_theta: f64,
    pub max_seq: usize,
    pub norm_eps: f64,
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.n_heads
    }

    pub fn kv_dim(&self) -> usize {
        self.head_dim() * self.n_kv_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.dim == 0 || self.n_heads == 0 || self.n_kv_heads == 0 {
            return bad("dim, n_heads and n_kv_heads must be positive".into());
        }
        if self.n_layers < 1 {
            return bad("n_layers must be at least 1".into());
        }
        if self.vocab_size < 2 {
            return bad(format!("vocab_size {} < 2", self.vocab_size));
        }
        if !self.dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "dim {} not divisible by n_heads {}",
                self.dim, self.n_heads
            ));
        }
        if self.n_kv_heads > self.n_heads || !self.n_heads.is_multiple_of(self.n_kv_heads) {
            return bad(format!(
                "n_kv_heads {} must divide n_heads {}",
                self.n_kv_heads, self.n_heads
            ));
        }
        if !self.head_dim().is_multiple_of(2) {
            return bad(format!("head_dim {} must be even", self.head_dim()));
        }
        if self.ffn_hidden == 0 || self.max_seq == 0 {
            return bad("ffn_hidden and max_seq must be positive".into());
        }
        if !(self.rope_theta.is_finite() && self.rope_theta > 0.0) {
            return bad(format!("rope_theta {} must be positive", self.rope_theta));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps > 0.0) {
            return bad(format!("norm_eps {} must be positive", self.norm_eps));
        }
        Ok(())
    }

    /// Canonical tensor names and shapes, in file order.
    pub fn tensor_table(&self) -> Vec<(String, Vec<usize>)> {
        let (d, v, h, kv) = (self.dim, self.vocab_size, self.ffn_hidden, self.kv_dim());
        let mut table = vec![("tok_embeddings".to_string(), vec![v, d])];
        for i in 0..self.n_layers {
            let p = format!("layers.{i}");
            table.extend([
                (format!("{p}.attn_norm"), vec![d]),
                (format!("{p}.wq"), vec![d, d]),
                (format!("{p}.wk"), vec![kv, d]),
                (format!("{p}.wv"), vec![kv, d]),
                (format!("{p}.wo"), vec![d, d]),
                (format!("{p}.ffn_norm"), vec![d]),
                (format!("{p}.w1"), vec![h, d]),
                (format!("{p}.w2"), vec![d, h]),
                (format!("{p}.w3"), vec![h, d]),
            ]);
        }
        table.push(("final_norm".to_string(), vec![d]));
        table.push(("unembedding".to_string(), vec![v, d]));
        table
    }
}

/// Weights of one transformer block. Projections are stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub attn_norm: Vec<T>,
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
    pub ffn_norm: Vec<T>,
    pub w1: Matrix<T>,
    pub w2: Matrix<T>,
    pub w3: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub tok_embeddings: Matrix<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub final_norm: Vec<T>,
    pub unembedding: Matrix<T>,
}

impl<T: Scalar> ModelWeights<T> {
    /// Unit norm gains, every matrix zero.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (d, v, h, kv) = (
            config.dim,
            config.vocab_size,
            config.ffn_hidden,
            config.kv_dim(),
        );
        let layer = LayerWeights {
            attn_norm: vec![T::one(); d],
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(kv, d),
            wv: Matrix::zeros(kv, d),
            wo: Matrix::zeros(d, d),
            ffn_norm: vec![T::one(); d],
            w1: Matrix::zeros(h, d),
            w2: Matrix::zeros(d, h),
            w3: Matrix::zeros(h, d),
        };
        Self {
            tok_embeddings: Matrix::zeros(v, d),
            layers: vec![layer; config.n_layers],
            final_norm: vec![T::one(); d],
            unembedding: Matrix::zeros(v, d),
        }
    }

    /// Uniform random weights scaled by `1/sqrt(fan_in)`, norm gains near one.
    pub fn random(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Self::zeros(config);
        weights.for_each_tensor_mut(|name, shape, data| {
            let is_gain = shape.len() == 1;
            let scale = if is_gain {
                0.1
            } else if name == "tok_embeddings" {
                1.0
            } else {
                1.0 / (shape[1] as f64).sqrt()
            };
            for x in data.iter_mut() {
                let u = (rng.next_u32() as f64 / u32::MAX as f64) * 2.0 - 1.0;
                let value = if is_gain { 1.0 + scale * u } else { scale * u };
                *x = T::lit(value);
            }
        });
        weights
    }

    /// Visits every tensor in canonical file order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, Vec<usize>, &[T])) {
        let mat = |m: &Matrix<T>| m.shape().to_vec();
        f(
            "tok_embeddings",
            mat(&self.tok_embeddings),
            self.tok_embeddings.as_slice(),
        );
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            f(
                &format!("{p}.attn_norm"),
                vec![l.attn_norm.len()],
                &l.attn_norm,
            );
            f(&format!("{p}.wq"), mat(&l.wq), l.wq.as_slice());
            f(&format!("{p}.wk"), mat(&l.wk), l.wk.as_slice());
            f(&format!("{p}.wv"), mat(&l.wv), l.wv.as_slice());
            f(&format!("{p}.wo"), mat(&l.wo), l.wo.as_slice());
            f(
                &format!("{p}.ffn_norm"),
                vec![l.ffn_norm.len()],
                &l.ffn_norm,
            );
            f(&format!("{p}.w1"), mat(&l.w1), l.w1.as_slice());
            f(&format!("{p}.w2"), mat(&l.w2), l.w2.as_slice());
            f(&format!("{p}.w3"), mat(&l.w3), l.w3.as_slice());
        }
        f("final_norm", vec![self.final_norm.len()], &self.final_norm);
        f(
            "unembedding",
            mat(&self.unembedding),
            self.unembedding.as_slice(),
        );
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, Vec<usize>, &mut [T])) {
        fn mat<T: Scalar>(m: &Matrix<T>) -> Vec<usize> {
            m.shape().to_vec()
        }
        f(
            "tok_embeddings",
            mat(&self.tok_embeddings),
            self.tok_embeddings.as_mut_slice(),
        );
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = format!("layers.{i}");
            f(
                &format!("{p}.attn_norm"),
                vec![l.attn_norm.len()],
                &mut l.attn_norm,
            );
            f(&format!("{p}.wq"), mat(&l.wq), l.wq.as_mut_slice());
            f(&format!("{p}.wk"), mat(&l.wk), l.wk.as_mut_slice());
            f(&format!("{p}.wv"), mat(&l.wv), l.wv.as_mut_slice());
            f(&format!("{p}.wo"), mat(&l.wo), l.wo.as_mut_slice());
            f(
                &format!("{p}.ffn_norm"),
                vec![l.ffn_norm.len()],
                &mut l.ffn_norm,
            );
            f(&format!("{p}.w1"), mat(&l.w1), l.w1.as_mut_slice());
            f(&format!("{p}.w2"), mat(&l.w2), l.w2.as_mut_slice());
            f(&format!("{p}.w3"), mat(&l.w3), l.w3.as_mut_slice());
        }
        f(
            "final_norm",
            vec![self.final_norm.len()],
            &mut self.final_norm,
        );
        f(
            "unembedding",
            mat(&self.unembedding),
            self.unembedding.as_mut_slice(),
        );
    }
}

/// Row-normalised unembedding Gram matrix `ÛᵀÛ` (d × d) and `‖ÛᵀÛ‖_F²`.
///
/// `‖ÛÛᵀ‖_F = ‖ÛᵀÛ‖_F`, so the d × d form stands in for the v × v one.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGram<T> {
    pub gram: Matrix<T>,
    pub frobenius_sq: T,
    pub vocab_size: usize,
    /// `1/‖u_t‖` per unembedding row, zero for zero rows.
    pub inv_row_norms: Vec<T>,
}

impl<T: Scalar> TokenGram<T> {
    pub fn from_unembedding(unembedding: &Matrix<T>) -> Self {
        let d = unembedding.cols();
        let mut gram = Matrix::zeros(d, d);
        let mut inv_row_norms = vec![T::zero(); unembedding.rows()];
        for (t, inv) in inv_row_norms.iter_mut().enumerate() {
            let row = unembedding.row(t);
            let norm = crate::scalar::norm_sq(row).sqrt();
            if norm == T::zero() {
                continue;
            }
            *inv = norm.recip();
            for a in 0..d {
                let ua = row[a] / norm;
                for b in 0..d {
                    gram[(a, b)] = gram[(a, b)] + ua * (row[b] / norm);
                }
            }
        }
        let frobenius_sq = gram.frobenius_sq();
        Self {
            gram,
            frobenius_sq,
            vocab_size: unembedding.rows(),
            inv_row_norms,
        }
    }
}

/// Validated, immutable model. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct ModelBundle<T> {
    config: ModelConfig,
    weights: ModelWeights<T>,
    token_gram: TokenGram<T>,
}

impl<T: Scalar> ModelBundle<T> {
    /// Checks every tensor shape against `config` and every entry for finiteness.
    pub fn new(config: ModelConfig, weights: ModelWeights<T>) -> Result<Self, ModelError> {
        config.validate()?;
        if weights.layers.len() != config.n_layers {
            return Err(ModelError::InvalidConfig(format!(
                "{} layer weight sets for n_layers {}",
                weights.layers.len(),
                config.n_layers
            )));
        }
        let expected = config.tensor_table();
        let mut idx = 0;
        let mut err = None;
        weights.for_each_tensor(|name, shape, data| {
            if err.is_some() {
                return;
            }
            let (exp_name, exp_shape) = &expected[idx];
            idx += 1;
            debug_assert_eq!(exp_name, name);
            if &shape != exp_shape {
                err = Some(ModelError::ShapeMismatch {
                    name: name.to_string(),
                    expected: exp_shape.clone(),
                    found: shape,
                });
            } else if let Some(index) = data.iter().position(|x| !x.is_finite()) {
                err = Some(ModelError::NonFinite {
                    name: name.to_string(),
                    index,
                });
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let token_gram = TokenGram::from_unembedding(&weights.unembedding);
        Ok(Self {
            config,
            weights,
            token_gram,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &ModelWeights<T> {
        &self.weights
    }

    pub fn token_gram(&self) -> &TokenGram<T> {
        &self.token_gram
    }

    pub fn unembedding(&self) -> &Matrix<T> {
        &self.weights.unembedding
    }

    /// Final RMS-norm followed by the unembedding: the language-modelling head.
    pub fn head_logits(&self, latent: &[T]) -> Vec<T> {
        let normed = rms_normalize(
            latent,
            &self.weights.final_norm,
            T::lit(self.config.norm_eps),
        );
        self.weights.unembedding.matvec(&normed)
    }

    /// Same weights converted to another precision.
    pub fn cast<U: Scalar>(&self) -> ModelBundle<U> {
        let conv = |m: &Matrix<T>| {
            Matrix::from_vec(
                m.rows(),
                m.cols(),
                m.as_slice()
                    .iter()
                    .map(|x| U::lit(x.to_f64_lossy()))
                    .collect(),
            )
            .expect("same shape")
        };
        let convv = |v: &[T]| {
            v.iter()
                .map(|x| U::lit(x.to_f64_lossy()))
                .collect::<Vec<_>>()
        };
        let weights = ModelWeights {
            tok_embeddings: conv(&self.weights.tok_embeddings),
            layers: self
                .weights
                .layers
                .iter()
                .map(|l| LayerWeights {
                    attn_norm: convv(&l.attn_norm),
                    wq: conv(&l.wq),
                    wk: conv(&l.wk),
                    wv: conv(&l.wv),
                    wo: conv(&l.wo),
                    ffn_norm: convv(&l.ffn_norm),
                    w1: conv(&l.w1),
                    w2: conv(&l.w2),
                    w3: conv(&l.w3),
                })
                .collect(),
            final_norm: convv(&self.weights.final_norm),
            unembedding: conv(&self.weights.unembedding),
        };
        ModelBundle::new(self.config.clone(), weights).expect("cast preserves validity")
    }
}
