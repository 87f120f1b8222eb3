//! Exact top-k cosine retrieval over the evidence banks, with frame-to-segment
//! aggregation for the image tool.
//!
//! Image retrieval scores every frame, keeps the best-matching frame per
//! temporal segment, and returns the top-k segments by that max score. Audio
//! retrieval ranks ASR items directly. Ties break toward the lower
//! segment id / item index. Brute force is the contract; banks are desk-scale.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::bank::{EvidenceBank, ImageItem};
use crate::embed::{is_unit_norm, EmbedBackend, EmbedError};

#[derive(Debug, Clone, PartialEq)]
pub enum RetrievalError {
    EmptyBank,
    MissingEmbeddings,
    InvalidK,
    Embed(EmbedError),
}

impl fmt::Display for RetrievalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetrievalError::EmptyBank => write!(f, "bank has no items for this modality"),
            RetrievalError::MissingEmbeddings => write!(f, "bank items are missing embeddings"),
            RetrievalError::InvalidK => write!(f, "k must be >= 1"),
            RetrievalError::Embed(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for RetrievalError {}

impl From<EmbedError> for RetrievalError {
    fn from(e: EmbedError) -> Self {
        RetrievalError::Embed(e)
    }
}

/// Evidence modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Audio,
}

/// One retrieved item with its time metadata and similarity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub segment_id: u64,
    pub t0_s: f64,
    pub t1_s: f64,
    pub asset_path: String,
    /// Present for audio hits only.
    pub transcript: Option<String>,
    /// Cosine similarity in [-1, 1].
    pub score: f64,
    /// Index of the underlying bank item (1-based, per modality).
    pub item_index: usize,
}

/// The evidence returned for one tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub modality: Modality,
    /// Sorted by score descending; at most k entries.
    pub hits: Vec<RetrievalHit>,
    pub query_echo: String,
}

impl EvidenceSet {
    pub fn empty(modality: Modality, query: &str) -> Self {
        EvidenceSet { modality, hits: Vec::new(), query_echo: String::from(query) }
    }

    /// Keeps at most `n` top hits; order is already score-descending.
    pub fn truncated(mut self, n: usize) -> Self {
        self.hits.truncate(n);
        self
    }
}

/// Cosine of two unit vectors: the dot product, accumulated in f64 and
/// clamped to [-1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
    dot.clamp(-1.0, 1.0)
}

/// Fills every missing embedding in the bank from the backend. Idempotent:
/// items already embedded by the same backend are left untouched.
pub fn embed_bank<B: EmbedBackend>(
    mut bank: EvidenceBank,
    backend: &B,
) -> Result<EvidenceBank, RetrievalError> {
    let dim = backend.dimension();
    for item in &mut bank.image_items {
        match &item.embedding {
            Some(v) if v.len() == dim => {}
            Some(v) => {
                return Err(EmbedError::DimensionMismatch { expected: dim, got: v.len() }.into())
            }
            None => item.embedding = Some(backend.embed_image(&item.asset_path)?),
        }
    }
    for item in &mut bank.audio_items {
        match &item.embedding {
            Some(v) if v.len() == dim => {}
            Some(v) => {
                return Err(EmbedError::DimensionMismatch { expected: dim, got: v.len() }.into())
            }
            None => item.embedding = Some(backend.embed_text(&item.transcript)?),
        }
    }
    bank.embed_backend_id = String::from(backend.backend_id());
    Ok(bank)
}

/// Time span covered by an image item: its segment window, clipped to start
/// at the frame timestamp.
fn image_span(item: &ImageItem, segment_len_s: f64) -> (f64, f64) {
    let seg_start = item.segment_id as f64 * segment_len_s;
    (seg_start, seg_start + segment_len_s)
}

/// Image retrieval tool: scores all frames against the query, keeps the
/// best-matching frame per segment, and returns the top-k segments.
pub fn retrieve_image<B: EmbedBackend>(
    bank: &EvidenceBank,
    backend: &B,
    query: &str,
    k_img: usize,
) -> Result<EvidenceSet, RetrievalError> {
    if k_img < 1 {
        return Err(RetrievalError::InvalidK);
    }
    if bank.image_items.is_empty() {
        return Err(RetrievalError::EmptyBank);
    }
    let q = backend.embed_text(query)?;
    debug_assert!(is_unit_norm(&q));

    // Best frame per segment. Within a segment, ties keep the earlier frame.
    let mut best: Vec<RetrievalHit> = Vec::new();
    for item in &bank.image_items {
        let emb = item.embedding.as_ref().ok_or(RetrievalError::MissingEmbeddings)?;
        let score = cosine(&q, emb);
        let (t0, t1) = image_span(item, bank.segment_len_s);
        let hit = RetrievalHit {
            segment_id: item.segment_id,
            t0_s: t0,
            t1_s: t1,
            asset_path: item.asset_path.clone(),
            transcript: None,
            score,
            item_index: item.index,
        };
        match best.iter_mut().find(|h| h.segment_id == item.segment_id) {
            Some(existing) if score > existing.score => *existing = hit,
            Some(_) => {}
            None => best.push(hit),
        }
    }
    best.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.segment_id.cmp(&b.segment_id))
    });
    best.truncate(k_img);
    Ok(EvidenceSet { modality: Modality::Image, hits: best, query_echo: String::from(query) })
}

/// Audio retrieval tool: natural-language search over ASR transcripts. No
/// segment dedup; the items are the segments.
pub fn retrieve_audio<B: EmbedBackend>(
    bank: &EvidenceBank,
    backend: &B,
    query: &str,
    k_aud: usize,
) -> Result<EvidenceSet, RetrievalError> {
    if k_aud < 1 {
        return Err(RetrievalError::InvalidK);
    }
    if bank.audio_items.is_empty() {
        return Err(RetrievalError::EmptyBank);
    }
    let q = backend.embed_text(query)?;

    let mut hits: Vec<RetrievalHit> = Vec::with_capacity(bank.audio_items.len());
    for item in &bank.audio_items {
        let emb = item.embedding.as_ref().ok_or(RetrievalError::MissingEmbeddings)?;
        hits.push(RetrievalHit {
            segment_id: item.segment_id,
            t0_s: item.t0_s,
            t1_s: item.t1_s,
            asset_path: item.asset_path.clone().unwrap_or_default(),
            transcript: Some(item.transcript.clone()),
            score: cosine(&q, emb),
            item_index: item.index,
        });
    }
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.item_index.cmp(&b.item_index))
    });
    hits.truncate(k_aud);
    Ok(EvidenceSet { modality: Modality::Audio, hits, query_echo: String::from(query) })
}
