//! Evidence bank construction: downsampling plans, frame schedules, and
//! ASR ingestion.
//!
//! A bank is built once per video from a manifest of pre-extracted frames and
//! a list of time-stamped ASR records. No media is decoded here; items carry
//! asset paths and metadata only. Embeddings are filled in later by
//! [`crate::retrieval::embed_bank`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Default frame sampling interval in seconds.
pub const DEFAULT_INTERVAL_S: f64 = 10.0;
/// Default temporal segment length in seconds, used for segment grouping.
pub const DEFAULT_SEGMENT_LEN_S: f64 = 10.0;

/// Errors raised while constructing a bank.
#[derive(Debug, Clone, PartialEq)]
pub enum BankError {
    /// Downsampling target duration must be positive.
    NonPositiveTarget,
    /// Frame sampling interval must be positive.
    NonPositiveInterval,
    /// Manifest duration must be positive.
    NonPositiveDuration,
    /// No frame asset within half an interval of a scheduled timestamp.
    MissingFrameAsset { timestamp_s: f64 },
    /// Manifest frame timestamps must be strictly increasing and within the
    /// video duration.
    BadManifestTimestamps { index: usize },
    /// ASR record start times must be nondecreasing.
    AsrOrderViolation { index: usize },
    /// ASR record spans must satisfy `start < end`.
    AsrInvalidSpan { index: usize },
}

impl fmt::Display for BankError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BankError::NonPositiveTarget => write!(f, "downsample target must be > 0"),
            BankError::NonPositiveInterval => write!(f, "sampling interval must be > 0"),
            BankError::NonPositiveDuration => write!(f, "video duration must be > 0"),
            BankError::MissingFrameAsset { timestamp_s } => {
                write!(f, "no frame asset within tolerance of t={timestamp_s}s")
            }
            BankError::BadManifestTimestamps { index } => {
                write!(f, "manifest frame timestamp out of order or out of range at index {index}")
            }
            BankError::AsrOrderViolation { index } => {
                write!(f, "ASR record start time decreases at index {index}")
            }
            BankError::AsrInvalidSpan { index } => {
                write!(f, "ASR record has start >= end at index {index}")
            }
        }
    }
}

impl core::error::Error for BankError {}

/// A video described by its pre-extracted assets. Nothing here touches media.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub video_id: String,
    /// Total duration of the source stream in seconds.
    pub duration_s: f64,
    /// `(timestamp_s, asset_path)` pairs, strictly increasing in time.
    pub frame_assets: Vec<(f64, String)>,
    pub audio_asset: Option<String>,
}

impl VideoManifest {
    /// Checks the manifest invariants: positive duration, strictly increasing
    /// frame timestamps, all within `[0, duration_s]`.
    pub fn validate(&self) -> Result<(), BankError> {
        if !(self.duration_s > 0.0) {
            return Err(BankError::NonPositiveDuration);
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, (ts, _)) in self.frame_assets.iter().enumerate() {
            if !(*ts > prev) || *ts < 0.0 || *ts > self.duration_s {
                return Err(BankError::BadManifestTimestamps { index: i });
            }
            prev = *ts;
        }
        Ok(())
    }
}

/// Pure metadata describing how a stream would be compressed to fit an input
/// budget. Rendering the external command is explicit and never executed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownsamplePlan {
    pub source_duration_s: f64,
    pub target_duration_s: f64,
    /// `source / target`; >= 1 when actually compressing.
    pub speed_factor: f64,
    pub external_command_template: Option<String>,
}

impl DownsamplePlan {
    /// Fills `{input}`, `{output}`, `{speed}`, and `{target}` placeholders in
    /// the command template, if one was supplied.
    pub fn render_command(&self, input: &str, output: &str) -> Option<String> {
        let tmpl = self.external_command_template.as_ref()?;
        let mut s = tmpl.clone();
        s = s.replace("{input}", input);
        s = s.replace("{output}", output);
        s = s.replace("{speed}", &format_f64(self.speed_factor));
        s = s.replace("{target}", &format_f64(self.target_duration_s));
        Some(s)
    }
}

fn format_f64(x: f64) -> String {
    use alloc::format;
    if x == libm::trunc(x) && x.abs() < 1e15 {
        format!("{:.1}", x)
    } else {
        format!("{}", x)
    }
}

/// One sampled frame with its time metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageItem {
    /// 1-based frame index in the sampling schedule.
    pub index: usize,
    /// Scheduled timestamp `(index - 1) * interval`.
    pub timestamp_s: f64,
    pub asset_path: String,
    pub segment_id: u64,
    /// Unit-norm embedding, filled by `retrieval::embed_bank`.
    pub embedding: Option<Vec<f32>>,
}

/// One time-stamped ASR transcript segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioItem {
    /// 1-based record index after empty-text filtering.
    pub index: usize,
    pub t0_s: f64,
    pub t1_s: f64,
    pub transcript: String,
    pub asset_path: Option<String>,
    pub segment_id: u64,
    pub embedding: Option<Vec<f32>>,
}

/// A raw ASR record as produced by an external transcription pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrRecord {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

/// Time-indexed image and audio repositories for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBank {
    pub video_id: String,
    pub sampling_interval_s: f64,
    pub segment_len_s: f64,
    pub image_items: Vec<ImageItem>,
    pub audio_items: Vec<AudioItem>,
    /// Identifier of the backend that produced the embeddings, empty until
    /// `embed_bank` runs.
    pub embed_backend_id: String,
}

/// Maps a timestamp to its temporal segment.
pub fn segment_id_for(timestamp_s: f64, segment_len_s: f64) -> u64 {
    libm::floor(timestamp_s / segment_len_s) as u64
}

/// Plans the budgeted temporal compression of a stream to `target_s` seconds.
pub fn plan_downsample(
    manifest: &VideoManifest,
    target_s: f64,
    command_template: Option<String>,
) -> Result<DownsamplePlan, BankError> {
    if !(target_s > 0.0) {
        return Err(BankError::NonPositiveTarget);
    }
    manifest.validate()?;
    Ok(DownsamplePlan {
        source_duration_s: manifest.duration_s,
        target_duration_s: target_s,
        speed_factor: manifest.duration_s / target_s,
        external_command_template: command_template,
    })
}

/// Fixed-interval frame schedule: `(i - 1) * interval` for `i = 1..=N` with
/// `N = floor(duration / interval) + 1`. The last timestamp never exceeds the
/// duration, even when the division lands on a float boundary.
pub fn sample_frame_schedule(duration_s: f64, interval_s: f64) -> Result<Vec<f64>, BankError> {
    if !(interval_s > 0.0) {
        return Err(BankError::NonPositiveInterval);
    }
    if !(duration_s > 0.0) {
        return Err(BankError::NonPositiveDuration);
    }
    let mut n = libm::floor(duration_s / interval_s) as u64;
    // Guard against the quotient rounding up across an integer boundary.
    while n > 0 && (n as f64) * interval_s > duration_s {
        n -= 1;
    }
    Ok((0..=n).map(|i| i as f64 * interval_s).collect())
}

/// Number of scheduled frames for a duration and interval.
pub fn schedule_len(duration_s: f64, interval_s: f64) -> Result<usize, BankError> {
    Ok(sample_frame_schedule(duration_s, interval_s)?.len())
}

/// Builds the image items by matching each scheduled timestamp to the nearest
/// manifest asset within half an interval.
pub fn build_image_bank(
    manifest: &VideoManifest,
    interval_s: f64,
    segment_len_s: f64,
) -> Result<Vec<ImageItem>, BankError> {
    manifest.validate()?;
    let schedule = sample_frame_schedule(manifest.duration_s, interval_s)?;
    let mut items = Vec::with_capacity(schedule.len());
    for (i, &ts) in schedule.iter().enumerate() {
        let best = manifest
            .frame_assets
            .iter()
            .map(|(t, path)| (libm::fabs(t - ts), path))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        match best {
            Some((dist, path)) if dist <= interval_s / 2.0 => items.push(ImageItem {
                index: i + 1,
                timestamp_s: ts,
                asset_path: path.clone(),
                segment_id: segment_id_for(ts, segment_len_s),
                embedding: None,
            }),
            _ => return Err(BankError::MissingFrameAsset { timestamp_s: ts }),
        }
    }
    Ok(items)
}

/// Turns raw ASR records into audio items: drops empty/whitespace transcripts,
/// requires nondecreasing start times (overlaps are allowed; real ASR
/// overlaps), and keeps input order for identical timestamps.
pub fn ingest_asr(records: &[AsrRecord], segment_len_s: f64) -> Result<Vec<AudioItem>, BankError> {
    let mut prev_start = f64::NEG_INFINITY;
    for (i, rec) in records.iter().enumerate() {
        if rec.start_s < prev_start {
            return Err(BankError::AsrOrderViolation { index: i });
        }
        if !(rec.start_s < rec.end_s) {
            return Err(BankError::AsrInvalidSpan { index: i });
        }
        prev_start = rec.start_s;
    }
    let mut items = Vec::new();
    for rec in records {
        let text = rec.text.trim();
        if text.is_empty() {
            continue;
        }
        items.push(AudioItem {
            index: items.len() + 1,
            t0_s: rec.start_s,
            t1_s: rec.end_s,
            transcript: String::from(text),
            asset_path: None,
            segment_id: segment_id_for(rec.start_s, segment_len_s),
            embedding: None,
        });
    }
    Ok(items)
}

/// Assembles a full bank from a manifest and ASR records.
pub fn build_bank(
    manifest: &VideoManifest,
    asr: &[AsrRecord],
    interval_s: f64,
    segment_len_s: f64,
) -> Result<EvidenceBank, BankError> {
    let image_items = build_image_bank(manifest, interval_s, segment_len_s)?;
    let audio_items = ingest_asr(asr, segment_len_s)?;
    Ok(EvidenceBank {
        video_id: manifest.video_id.clone(),
        sampling_interval_s: interval_s,
        segment_len_s,
        image_items,
        audio_items,
        embed_backend_id: String::new(),
    })
}
