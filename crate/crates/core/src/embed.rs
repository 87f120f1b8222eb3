//! Pluggable embedding backends.
//!
//! The engine only requires that a backend maps the same input to the same
//! unit vector. The deterministic backend here hashes the token multiset of
//! the input into an RNG seed and draws a pseudo-random unit vector, which
//! makes retrieval fully reproducible offline. An HTTP-service backend lives
//! in the companion crate behind the same trait.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::seed::stream_rng;

/// Tolerance on the unit-norm invariant for stored embeddings.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedError {
    BackendUnavailable { detail: String },
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedError::BackendUnavailable { detail } => {
                write!(f, "embedding backend unavailable: {detail}")
            }
            EmbedError::DimensionMismatch { expected, got } => {
                write!(f, "embedding dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl core::error::Error for EmbedError {}

/// An embedding backend: text queries, transcripts, and image assets all map
/// to unit vectors of a fixed dimension.
pub trait EmbedBackend {
    fn backend_id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Embeds a text (query or ASR transcript).
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
    /// Embeds an image, referenced by asset path.
    fn embed_image(&self, asset_path: &str) -> Result<Vec<f32>, EmbedError>;
}

/// Deterministic test backend: seeded hash of the token multiset drives a
/// pseudo-random unit vector. Identical inputs (up to token order) embed
/// identically; unrelated inputs are nearly orthogonal in expectation.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    id: String,
    dimension: usize,
    seed: u64,
}

impl DeterministicEmbedder {
    pub const DEFAULT_DIMENSION: usize = 64;

    pub fn new(seed: u64) -> Self {
        Self::with_dimension(seed, Self::DEFAULT_DIMENSION)
    }

    pub fn with_dimension(seed: u64, dimension: usize) -> Self {
        use alloc::format;
        DeterministicEmbedder {
            id: format!("deterministic-test:{seed}:{dimension}"),
            dimension,
            seed,
        }
    }

    /// Order-independent hash of the lowercased token multiset. Summing
    /// per-token hashes makes the combination multiset-invariant.
    fn token_multiset_hash(&self, text: &str) -> u64 {
        let mut acc: u64 = 0;
        for token in text.split_whitespace() {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325; // FNV-1a offset basis
            for b in token.bytes() {
                let b = b.to_ascii_lowercase();
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            acc = acc.wrapping_add(crate::seed::splitmix64(h));
        }
        acc
    }

    fn unit_vector(&self, input_hash: u64) -> Vec<f32> {
        let mut rng = stream_rng(self.seed, input_hash);
        // Box-Muller gaussian components, then L2 normalize.
        let mut v = Vec::with_capacity(self.dimension);
        while v.len() < self.dimension {
            let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            let r = libm::sqrt(-2.0 * libm::log(u1));
            let theta = 2.0 * core::f64::consts::PI * u2;
            v.push(r * libm::cos(theta));
            if v.len() < self.dimension {
                v.push(r * libm::sin(theta));
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        v.into_iter().map(|x| (x / norm) as f32).collect()
    }
}

impl EmbedBackend for DeterministicEmbedder {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        Ok(self.unit_vector(self.token_multiset_hash(text)))
    }

    fn embed_image(&self, asset_path: &str) -> Result<Vec<f32>, EmbedError> {
        // Image content is not decoded; the asset path stands in for it.
        // A query equal to the path embeds identically, which the fixture
        // tests rely on.
        Ok(self.unit_vector(self.token_multiset_hash(asset_path)))
    }
}

/// Checks that a vector is unit-norm within [`NORM_TOLERANCE`].
pub fn is_unit_norm(v: &[f32]) -> bool {
    let norm = libm::sqrt(v.iter().map(|x| *x as f64 * *x as f64).sum::<f64>());
    libm::fabs(norm - 1.0) <= NORM_TOLERANCE
}
