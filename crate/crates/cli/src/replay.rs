//! Trace replay: re-executes every recorded retrieval against the bank and
//! verifies the recorded observations still match. Any drift — a changed
//! bank, backend, or retrieval parameter — surfaces as a divergence.

use std::path::Path;

use thiserror::Error;

use omnirag_core::bank::EvidenceBank;
use omnirag_core::embed::EmbedBackend;
use omnirag_core::episode::EpisodeConfig;
use omnirag_core::retrieval::{retrieve_audio, retrieve_image, RetrievalError, RetrievalHit};

use crate::formats::{load_trace, FormatError, TraceLine, TraceTurn};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("retrieval failed during replay: {0}")]
    Retrieval(String),
    #[error("trace turn {turn} is malformed: {detail}")]
    MalformedTurn { turn: usize, detail: String },
    #[error("replay divergence at turn {turn}: {detail}")]
    Divergence { turn: usize, detail: String },
}

/// Outcome of a clean replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplaySummary {
    pub turns: usize,
    pub retrievals_checked: usize,
}

fn hits_differ(recorded: &[RetrievalHit], fresh: &[RetrievalHit]) -> Option<String> {
    if recorded.len() != fresh.len() {
        return Some(format!("{} recorded hits vs {} replayed", recorded.len(), fresh.len()));
    }
    for (i, (r, f)) in recorded.iter().zip(fresh).enumerate() {
        if r != f {
            return Some(format!(
                "hit {i}: recorded segment {} score {:.6}, replayed segment {} score {:.6}",
                r.segment_id, r.score, f.segment_id, f.score
            ));
        }
    }
    None
}

fn replay_turn<B: EmbedBackend>(
    turn: &TraceTurn,
    bank: &EvidenceBank,
    backend: &B,
    config: &EpisodeConfig,
) -> Result<bool, ReplayError> {
    let query = || {
        turn.action.query.clone().ok_or(ReplayError::MalformedTurn {
            turn: turn.turn,
            detail: "search action without a query".into(),
        })
    };
    let fresh = match turn.action.kind.as_str() {
        "search_image" => match retrieve_image(bank, backend, &query()?, config.k_img) {
            Ok(es) => es.truncated(config.max_attached_segments).hits,
            Err(RetrievalError::EmptyBank) => Vec::new(),
            Err(e) => return Err(ReplayError::Retrieval(e.to_string())),
        },
        "search_audio" => match retrieve_audio(bank, backend, &query()?, config.k_aud) {
            Ok(es) => es.truncated(config.max_attached_segments).hits,
            Err(RetrievalError::EmptyBank) => Vec::new(),
            Err(e) => return Err(ReplayError::Retrieval(e.to_string())),
        },
        "answer" => {
            if !turn.observation.is_empty() {
                return Err(ReplayError::Divergence {
                    turn: turn.turn,
                    detail: "answer turn carries an observation".into(),
                });
            }
            return Ok(false);
        }
        other => {
            return Err(ReplayError::MalformedTurn {
                turn: turn.turn,
                detail: format!("unknown action kind {other:?}"),
            })
        }
    };
    if let Some(detail) = hits_differ(&turn.observation, &fresh) {
        return Err(ReplayError::Divergence { turn: turn.turn, detail });
    }
    Ok(true)
}

/// Replays every turn of a loaded trace against the bank.
pub fn replay_lines<B: EmbedBackend>(
    lines: &[TraceLine],
    bank: &EvidenceBank,
    backend: &B,
    config: &EpisodeConfig,
) -> Result<ReplaySummary, ReplayError> {
    let mut turns = 0;
    let mut retrievals_checked = 0;
    for line in lines {
        if let TraceLine::Turn(t) = line {
            turns += 1;
            if replay_turn(t, bank, backend, config)? {
                retrievals_checked += 1;
            }
        }
    }
    Ok(ReplaySummary { turns, retrievals_checked })
}

/// Loads a trace file and replays it.
pub fn replay_trace<B: EmbedBackend>(
    path: &Path,
    bank: &EvidenceBank,
    backend: &B,
    config: &EpisodeConfig,
) -> Result<ReplaySummary, ReplayError> {
    let lines = load_trace(path)?;
    replay_lines(&lines, bank, backend, config)
}
