//! On-disk evidence-bank store.
//!
//! Layout inside a bank directory:
//! * `meta` — JSON header (version, ids, intervals, embedding info);
//! * `image_items`, `audio_items` — JSONL, one item per line, embeddings
//!   stripped;
//! * `embeddings.img`, `embeddings.aud` — flat little-endian f32 rows, row i
//!   belonging to item i. Present only when the bank is embedded.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use omnirag_core::bank::{AudioItem, EvidenceBank, ImageItem};

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt bank: {detail}")]
    CorruptBank { detail: String },
    #[error("bank store version mismatch: found {found}, supported {STORE_VERSION}")]
    VersionMismatch { found: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

fn corrupt(detail: impl Into<String>) -> StoreError {
    StoreError::CorruptBank { detail: detail.into() }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    version: u32,
    video_id: String,
    sampling_interval_s: f64,
    segment_len_s: f64,
    embed_backend_id: String,
    /// Embedding dimension; 0 when the bank is not embedded.
    dimension: usize,
    image_count: usize,
    audio_count: usize,
}

/// Whether every, none, or some of the items carry embeddings. Mixed banks
/// are refused: the flat row files require a row per item.
fn embedding_dimension<'a, I>(items: I, what: &str) -> Result<Option<usize>, StoreError>
where
    I: Iterator<Item = Option<&'a Vec<f32>>>,
{
    let mut dim: Option<usize> = None;
    let mut seen_none = false;
    let mut seen_some = false;
    for e in items {
        match e {
            Some(v) => {
                seen_some = true;
                match dim {
                    Some(d) if d != v.len() => {
                        return Err(corrupt(format!(
                            "{what} embeddings have inconsistent dimensions {d} and {}",
                            v.len()
                        )))
                    }
                    _ => dim = Some(v.len()),
                }
            }
            None => seen_none = true,
        }
    }
    if seen_some && seen_none {
        return Err(corrupt(format!("{what} items are only partially embedded")));
    }
    Ok(dim)
}

fn write_rows(path: &Path, rows: Vec<&Vec<f32>>) -> Result<(), StoreError> {
    let mut bytes = Vec::new();
    for row in rows {
        for x in row {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_rows(path: &Path, count: usize, dim: usize) -> Result<Vec<Vec<f32>>, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = count * dim * 4;
    if bytes.len() != expected {
        return Err(corrupt(format!(
            "{} holds {} bytes, expected {expected} ({count} rows x {dim} floats)",
            path.display(),
            bytes.len()
        )));
    }
    let mut rows = Vec::with_capacity(count);
    let mut it = bytes.chunks_exact(4);
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            let chunk = it.next().expect("length checked");
            row.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("bank item serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| {
            corrupt(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

/// Writes a bank directory. Embeddings must be all-present or all-absent per
/// modality; the dimension must agree across modalities.
pub fn save_bank(dir: &Path, bank: &EvidenceBank) -> Result<(), StoreError> {
    let img_dim = embedding_dimension(
        bank.image_items.iter().map(|i| i.embedding.as_ref()),
        "image",
    )?;
    let aud_dim = embedding_dimension(
        bank.audio_items.iter().map(|i| i.embedding.as_ref()),
        "audio",
    )?;
    let dim = match (img_dim, aud_dim) {
        (Some(a), Some(b)) if a != b => {
            return Err(corrupt(format!("image dimension {a} != audio dimension {b}")))
        }
        (a, b) => a.or(b).unwrap_or(0),
    };

    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = Meta {
        version: STORE_VERSION,
        video_id: bank.video_id.clone(),
        sampling_interval_s: bank.sampling_interval_s,
        segment_len_s: bank.segment_len_s,
        embed_backend_id: bank.embed_backend_id.clone(),
        dimension: dim,
        image_count: bank.image_items.len(),
        audio_count: bank.audio_items.len(),
    };
    let meta_path = dir.join("meta");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes"))
        .map_err(io_err(&meta_path))?;

    let stripped_img: Vec<ImageItem> = bank
        .image_items
        .iter()
        .map(|i| ImageItem { embedding: None, ..i.clone() })
        .collect();
    let stripped_aud: Vec<AudioItem> = bank
        .audio_items
        .iter()
        .map(|i| AudioItem { embedding: None, ..i.clone() })
        .collect();
    write_jsonl(&dir.join("image_items"), &stripped_img)?;
    write_jsonl(&dir.join("audio_items"), &stripped_aud)?;

    if img_dim.is_some() {
        write_rows(
            &dir.join("embeddings.img"),
            bank.image_items.iter().map(|i| i.embedding.as_ref().unwrap()).collect(),
        )?;
    }
    if aud_dim.is_some() {
        write_rows(
            &dir.join("embeddings.aud"),
            bank.audio_items.iter().map(|i| i.embedding.as_ref().unwrap()).collect(),
        )?;
    }
    Ok(())
}

/// Reads a bank directory written by [`save_bank`].
pub fn load_bank(dir: &Path) -> Result<EvidenceBank, StoreError> {
    let meta_path = dir.join("meta");
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: Meta =
        serde_json::from_str(&meta_text).map_err(|e| corrupt(format!("meta: {e}")))?;
    if meta.version != STORE_VERSION {
        return Err(StoreError::VersionMismatch { found: meta.version });
    }

    let mut image_items: Vec<ImageItem> = read_jsonl(&dir.join("image_items"))?;
    let mut audio_items: Vec<AudioItem> = read_jsonl(&dir.join("audio_items"))?;
    if image_items.len() != meta.image_count {
        return Err(corrupt(format!(
            "meta says {} image items, file holds {}",
            meta.image_count,
            image_items.len()
        )));
    }
    if audio_items.len() != meta.audio_count {
        return Err(corrupt(format!(
            "meta says {} audio items, file holds {}",
            meta.audio_count,
            audio_items.len()
        )));
    }

    let img_path = dir.join("embeddings.img");
    if img_path.exists() {
        let rows = read_rows(&img_path, image_items.len(), meta.dimension)?;
        for (item, row) in image_items.iter_mut().zip(rows) {
            item.embedding = Some(row);
        }
    }
    let aud_path = dir.join("embeddings.aud");
    if aud_path.exists() {
        let rows = read_rows(&aud_path, audio_items.len(), meta.dimension)?;
        for (item, row) in audio_items.iter_mut().zip(rows) {
            item.embedding = Some(row);
        }
    }

    Ok(EvidenceBank {
        video_id: meta.video_id,
        sampling_interval_s: meta.sampling_interval_s,
        segment_len_s: meta.segment_len_s,
        image_items,
        audio_items,
        embed_backend_id: meta.embed_backend_id,
    })
}
