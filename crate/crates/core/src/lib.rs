// SPDX-License-Identifier: MIT OR Apache-2.0

//! # llens
//!
//! Residual-stream analysis for decoder-only transformers.
//!
//! The crate runs a Llama-style forward pass that keeps every intermediate
//! latent, decodes those latents with the logit lens, and measures them:
//! next-token entropy, token energy, language probabilities over word-start
//! token sets, binary-answer (yes/no) decisions and a classical-MDS view of
//! latent trajectories.
//!
//! All model math is generic over [`Scalar`] (`f32` or `f64`). Next-token
//! distributions are always materialised in `f64`. Concrete aliases for the
//! two supported precisions live at the crate root.

pub mod geometry;
pub mod langmeter;
pub mod lens;
pub mod model;
pub mod scalar;
pub mod tasks;
pub mod tensor;
pub mod tokenizer;

pub use geometry::{
    build_lens_distance_matrix, classical_mds, symmetric_eigen, DistanceMatrix, GeometryError,
    MdsEmbedding, PointKind, PointLabel, TrajectoryEmbedding,
};
pub use langmeter::{
    accuracy, boolq_decide, build_boolq_sets, lang_probability, Answer, BoolqTokenTable,
    LangMeterError, LanguageProbability, LanguageTokenSet, SetKind,
};
pub use lens::{
    entropy_bits, lens_distance, logit_lens, sublayer_deltas, token_energy, LensError,
    NextTokenDistribution, SublayerDelta, DEFAULT_DISTANCE_CAP,
};
pub use model::{
    forward, load_model, rms_normalize, save_model, LatentTrace, LayerWeights, ModelBundle,
    ModelConfig, ModelError, ModelWeights,
};
pub use scalar::Scalar;
pub use tasks::{PromptInstance, TaskError, TaskKind, WordRecord};
pub use tensor::Matrix;
pub use tokenizer::{TokenIdSequence, TokenizerError, Vocabulary};

/// Model bundle computing in single precision (the default for batch runs).
pub type ModelF32 = ModelBundle<f32>;
/// Model bundle computing in double precision (used where oracles need tight tolerances).
pub type ModelF64 = ModelBundle<f64>;
pub type TraceF32 = LatentTrace<f32>;
pub type TraceF64 = LatentTrace<f64>;
pub type DistanceMatrixF64 = DistanceMatrix<f64>;
