//! File formats: video manifests, ASR files, question files, trace JSONL,
//! learning-curve CSV, and toy-policy checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use omnirag_core::bank::{AsrRecord, VideoManifest};
use omnirag_core::episode::{TerminationReason, TrajectoryRecord};
use omnirag_core::grpo::{CurvePoint, GrpoConfig, ToyPolicy, ToyRetrievalEnv};
use omnirag_core::protocol::{Action, RewardBreakdown};
use omnirag_core::retrieval::RetrievalHit;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what} at {path}: {detail}")]
    Malformed { what: &'static str, path: String, detail: String },
}

fn read_file(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path)
        .map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
        }
    }
    fs::write(path, contents)
        .map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

// ---------------------------------------------------------------------------
// Manifest and ASR
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameAssetFile {
    timestamp_s: f64,
    asset_path: String,
}

/// On-disk form of a video manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub video_id: String,
    pub duration_s: f64,
    frame_assets: Vec<FrameAssetFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_asset: Option<String>,
}

impl From<&VideoManifest> for ManifestFile {
    fn from(m: &VideoManifest) -> Self {
        ManifestFile {
            video_id: m.video_id.clone(),
            duration_s: m.duration_s,
            frame_assets: m
                .frame_assets
                .iter()
                .map(|(t, p)| FrameAssetFile { timestamp_s: *t, asset_path: p.clone() })
                .collect(),
            audio_asset: m.audio_asset.clone(),
        }
    }
}

impl From<ManifestFile> for VideoManifest {
    fn from(f: ManifestFile) -> Self {
        VideoManifest {
            video_id: f.video_id,
            duration_s: f.duration_s,
            frame_assets: f.frame_assets.into_iter().map(|a| (a.timestamp_s, a.asset_path)).collect(),
            audio_asset: f.audio_asset,
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<VideoManifest, FormatError> {
    let text = read_file(path)?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| FormatError::Malformed {
        what: "manifest",
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok(file.into())
}

pub fn save_manifest(path: &Path, manifest: &VideoManifest) -> Result<(), FormatError> {
    let file = ManifestFile::from(manifest);
    write_file(path, &serde_json::to_string_pretty(&file).expect("manifest serializes"))
}

/// Loads an ASR file: a JSON array of `{start_s, end_s, text}`.
pub fn load_asr(path: &Path) -> Result<Vec<AsrRecord>, FormatError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::Malformed {
        what: "asr file",
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn save_asr(path: &Path, records: &[AsrRecord]) -> Result<(), FormatError> {
    write_file(path, &serde_json::to_string_pretty(records).expect("asr serializes"))
}

// ---------------------------------------------------------------------------
// Questions
// ---------------------------------------------------------------------------

/// One benchmark question (JSONL, one object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub gold: String,
    pub video_id: String,
    /// Optional ability category for per-category accuracy aggregation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

pub fn load_questions(path: &Path) -> Result<Vec<Question>, FormatError> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| FormatError::Malformed {
            what: "question file",
            path: path.display().to_string(),
            detail: format!("line {}: {e}", i + 1),
        })?;
        out.push(q);
    }
    Ok(out)
}

pub fn save_questions(path: &Path, questions: &[Question]) -> Result<(), FormatError> {
    let mut text = String::new();
    for q in questions {
        text.push_str(&serde_json::to_string(q).expect("question serializes"));
        text.push('\n');
    }
    write_file(path, &text)
}

// ---------------------------------------------------------------------------
// Trace JSONL
// ---------------------------------------------------------------------------

/// An action as recorded in a trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAction {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl From<&Action> for TraceAction {
    fn from(a: &Action) -> Self {
        match a {
            Action::SearchImage { query } => TraceAction {
                kind: "search_image".into(),
                query: Some(query.clone()),
                answer: None,
            },
            Action::SearchAudio { query } => TraceAction {
                kind: "search_audio".into(),
                query: Some(query.clone()),
                answer: None,
            },
            Action::Answer { text } => {
                TraceAction { kind: "answer".into(), query: None, answer: Some(text.clone()) }
            }
        }
    }
}

/// One turn of a recorded episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTurn {
    pub turn: usize,
    pub think: String,
    pub action: TraceAction,
    #[serde(default)]
    pub observation: Vec<RetrievalHit>,
    pub stop: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// The terminal record closing a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTerminal {
    pub answer: String,
    #[serde(rename = "R_fmt")]
    pub r_fmt: f64,
    #[serde(rename = "R_perf")]
    pub r_perf: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

/// One line of a trace file. Turn lines carry a `turn` field; the terminal
/// line carries `answer` and the reward fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceLine {
    Turn(TraceTurn),
    Terminal(TraceTerminal),
}

fn reason_str(r: TerminationReason) -> &'static str {
    match r {
        TerminationReason::Answered => "answered",
        TerminationReason::Budget => "budget",
        TerminationReason::ParseFailure => "parse_failure",
        TerminationReason::PolicyFailure => "policy_failure",
    }
}

/// Flattens a scored trajectory into trace lines: one per turn plus the
/// terminal record. The termination reason is recorded on the final turn.
pub fn trace_lines(record: &TrajectoryRecord, reward: &RewardBreakdown) -> Vec<TraceLine> {
    let mut out = Vec::with_capacity(record.turns.len() + 1);
    let last = record.turns.len().saturating_sub(1);
    for (i, t) in record.turns.iter().enumerate() {
        out.push(TraceLine::Turn(TraceTurn {
            turn: i + 1,
            think: t.parsed.think.clone(),
            action: TraceAction::from(&t.parsed.action),
            observation: t.observation.as_ref().map(|o| o.hits.clone()).unwrap_or_default(),
            stop: !t.parsed.continue_flag || i == last && record.termination != TerminationReason::Answered,
            reason: (i == last).then(|| reason_str(record.termination).to_string()),
        }));
    }
    out.push(TraceLine::Terminal(TraceTerminal {
        answer: record.final_answer.clone().unwrap_or_default(),
        r_fmt: reward.format,
        r_perf: reward.performance,
        r: reward.total,
    }));
    out
}

pub fn save_trace(path: &Path, lines: &[TraceLine]) -> Result<(), FormatError> {
    let mut text = String::new();
    for line in lines {
        text.push_str(&serde_json::to_string(line).expect("trace line serializes"));
        text.push('\n');
    }
    write_file(path, &text)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceLine>, FormatError> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: TraceLine = serde_json::from_str(line).map_err(|e| FormatError::Malformed {
            what: "trace file",
            path: path.display().to_string(),
            detail: format!("line {}: {e}", i + 1),
        })?;
        out.push(l);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Learning curve CSV and checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    step: usize,
    mean_reward: f64,
    mean_fmt: f64,
    mean_perf: f64,
    kl: f64,
    clip_fraction: f64,
}

pub fn save_curve(path: &Path, curve: &[CurvePoint]) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
        }
    }
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| FormatError::Malformed {
            what: "curve csv",
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    for p in curve {
        w.serialize(CurveRow {
            step: p.step,
            mean_reward: p.mean_reward,
            mean_fmt: p.mean_format,
            mean_perf: p.mean_performance,
            kl: p.kl,
            clip_fraction: p.clip_fraction,
        })
        .map_err(|e| FormatError::Malformed {
            what: "curve csv",
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    }
    w.flush().map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn load_curve(path: &Path) -> Result<Vec<CurvePoint>, FormatError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| FormatError::Malformed {
        what: "curve csv",
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: CurveRow = row.map_err(|e| FormatError::Malformed {
            what: "curve csv",
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        out.push(CurvePoint {
            step: row.step,
            mean_reward: row.mean_reward,
            mean_format: row.mean_fmt,
            mean_performance: row.mean_perf,
            kl: row.kl,
            clip_fraction: row.clip_fraction,
        });
    }
    Ok(out)
}

/// A toy-policy checkpoint: everything needed to resume or reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub policy: ToyPolicy,
    pub env: ToyRetrievalEnv,
    pub config: GrpoConfig,
    pub seed: u64,
    pub steps: usize,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), FormatError> {
    write_file(path, &serde_json::to_string_pretty(ckpt).expect("checkpoint serializes"))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, FormatError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::Malformed {
        what: "checkpoint",
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}
