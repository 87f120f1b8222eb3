//! Multi-turn tool-calling episode state machine.
//!
//! An episode starts from the question, the compressed-video reference, and
//! the prompt template; then alternates policy emissions with tool
//! observations until the policy answers or the turn budget runs out. The
//! context handed to the policy each turn is the compact summary of the
//! history: the last few turns verbatim plus one-line descriptors of older
//! evidence.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::bank::EvidenceBank;
use crate::embed::EmbedBackend;
use crate::protocol::{
    parse_turn, render_turn, Action, ParseMode, ParsedTurn, RewardBreakdown, TagGrammar,
};
use crate::retrieval::{retrieve_audio, retrieve_image, EvidenceSet, RetrievalError};

/// Per-episode knobs. `inference()` is the evaluation profile (k = 5),
/// `train()` the rollout profile (k = 3, strict parsing, no re-prompt).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_turns: usize,
    pub k_img: usize,
    pub k_aud: usize,
    /// Evidence segments attached to the context per tool call.
    pub max_attached_segments: usize,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub parse_mode: ParseMode,
    /// On a parse failure: re-prompt once with a format reminder before
    /// terminating. Inference-only concession; training scoring stays strict.
    pub reprompt_on_parse_failure: bool,
    /// Turns kept verbatim in the rolling summary.
    pub summary_window: usize,
}

impl EpisodeConfig {
    pub fn inference() -> Self {
        EpisodeConfig {
            max_turns: 20,
            k_img: 5,
            k_aud: 5,
            max_attached_segments: 3,
            temperature: 0.2,
            max_new_tokens: 512,
            parse_mode: ParseMode::Lenient,
            reprompt_on_parse_failure: true,
            summary_window: 4,
        }
    }

    pub fn train() -> Self {
        EpisodeConfig {
            k_img: 3,
            k_aud: 3,
            parse_mode: ParseMode::Strict,
            reprompt_on_parse_failure: false,
            ..Self::inference()
        }
    }
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self::inference()
    }
}

/// A policy backend produces one raw emission given the rendered context.
pub trait PolicyBackend {
    fn complete(&mut self, context: &str) -> Result<String, PolicyError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyError {
    pub detail: String,
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "policy backend error: {}", self.detail)
    }
}

impl core::error::Error for PolicyError {}

/// Scripted policy: plays back a fixed list of emissions. After the list is
/// exhausted it repeats the last emission, which makes never-answering
/// adversaries easy to script.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    emissions: Vec<String>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(emissions: Vec<String>) -> Self {
        ScriptedPolicy { emissions, cursor: 0 }
    }

    /// Convenience constructor rendering turns through the canonical
    /// serializer.
    pub fn from_turns(turns: &[ParsedTurn]) -> Self {
        Self::new(turns.iter().map(render_turn).collect())
    }
}

impl PolicyBackend for ScriptedPolicy {
    fn complete(&mut self, _context: &str) -> Result<String, PolicyError> {
        if self.emissions.is_empty() {
            return Err(PolicyError { detail: "scripted policy has no emissions".to_string() });
        }
        let i = self.cursor.min(self.emissions.len() - 1);
        self.cursor += 1;
        Ok(self.emissions[i].clone())
    }
}

/// One completed turn in the history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub raw: String,
    pub parsed: ParsedTurn,
    /// Present iff the action was a search.
    pub observation: Option<EvidenceSet>,
}

/// Append-only interaction history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub question: String,
    pub video_ref: String,
    pub template: String,
    pub turns: Vec<HistoryTurn>,
}

/// Placeholders accepted by the initial prompt template.
pub const TEMPLATE_QUESTION: &str = "{question}";
pub const TEMPLATE_VIDEO: &str = "{video}";

/// Default initial prompt template: the tool protocol, the compressed-video
/// reference, and the question.
pub const DEFAULT_TEMPLATE: &str = "\
You are answering a question about a long audio-video stream.\n\
Compressed video reference: {video}\n\
Question: {question}\n\
Each turn, emit exactly one <think>...</think> block followed by exactly one of\n\
<search_image>query</search_image>, <search_audio>query</search_audio>, or\n\
<answer>final answer</answer>. Search tools return time-stamped evidence\n\
segments. Answer as soon as the evidence suffices.\n";

impl History {
    pub fn initial_prompt(&self) -> String {
        self.template
            .replace(TEMPLATE_QUESTION, &self.question)
            .replace(TEMPLATE_VIDEO, &self.video_ref)
    }
}

/// Renders one evidence set as the observation block appended to the context.
pub fn render_observation(evidence: &EvidenceSet) -> String {
    use core::fmt::Write;
    let mut out = String::from("```observation\n");
    if evidence.hits.is_empty() {
        out.push_str("NO_RESULTS\n");
    } else {
        for hit in &evidence.hits {
            let _ = write!(
                out,
                "segment_id={} t0={:.1} t1={:.1} score={:.4} asset={}",
                hit.segment_id, hit.t0_s, hit.t1_s, hit.score, hit.asset_path
            );
            if let Some(t) = &hit.transcript {
                let _ = write!(out, " transcript={t:?}");
            }
            out.push('\n');
        }
    }
    out.push_str("```");
    out
}

fn one_line_digest(turn: &HistoryTurn) -> String {
    use core::fmt::Write;
    let mut line = String::new();
    match &turn.parsed.action {
        Action::SearchImage { query } => {
            let _ = write!(line, "[img {query:?}]");
        }
        Action::SearchAudio { query } => {
            let _ = write!(line, "[aud {query:?}]");
        }
        Action::Answer { text } => {
            let _ = write!(line, "[answer {text:?}]");
            return line;
        }
    }
    match &turn.observation {
        Some(es) if !es.hits.is_empty() => {
            for hit in &es.hits {
                let _ = write!(
                    line,
                    " seg={} {:.1}-{:.1} score={:.4};",
                    hit.segment_id, hit.t0_s, hit.t1_s, hit.score
                );
            }
        }
        _ => line.push_str(" NO_RESULTS"),
    }
    line
}

/// The compact state representation: recomputable from the history alone.
/// Keeps the last `window` turns verbatim and compresses older evidence to
/// one-line descriptors.
pub fn summarize(history: &History, window: usize) -> String {
    let mut out = history.initial_prompt();
    let n = history.turns.len();
    let verbatim_from = n.saturating_sub(window);
    if verbatim_from > 0 {
        out.push_str("\nEarlier evidence:\n");
        for turn in &history.turns[..verbatim_from] {
            out.push_str(&one_line_digest(turn));
            out.push('\n');
        }
    }
    for turn in &history.turns[verbatim_from..] {
        out.push('\n');
        out.push_str(&turn.raw);
        if let Some(es) = &turn.observation {
            out.push('\n');
            out.push_str(&render_observation(es));
        }
    }
    out
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Answered,
    Budget,
    ParseFailure,
    PolicyFailure,
}

/// Live state of a running episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub history: History,
    pub summary: String,
    pub config: EpisodeConfig,
    pub terminated: Option<TerminationReason>,
    pub final_answer: Option<String>,
}

/// One complete rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode_id: String,
    pub question: String,
    pub turns: Vec<HistoryTurn>,
    pub final_answer: Option<String>,
    pub termination: TerminationReason,
    pub reward: Option<RewardBreakdown>,
}

impl TrajectoryRecord {
    /// Concatenation of raw emissions; this is the text the format reward
    /// sees.
    pub fn trajectory_text(&self) -> String {
        let mut out = String::new();
        for t in &self.turns {
            out.push_str(&t.raw);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpisodeError {
    Policy(PolicyError),
    Retrieval(RetrievalError),
    AlreadyTerminated,
}

impl fmt::Display for EpisodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpisodeError::Policy(e) => write!(f, "{e}"),
            EpisodeError::Retrieval(e) => write!(f, "retrieval failed mid-episode: {e}"),
            EpisodeError::AlreadyTerminated => write!(f, "episode already terminated"),
        }
    }
}

impl core::error::Error for EpisodeError {}

impl From<RetrievalError> for EpisodeError {
    fn from(e: RetrievalError) -> Self {
        EpisodeError::Retrieval(e)
    }
}

/// Initializes the episode state from the question, video reference, and
/// prompt template.
pub fn init_episode(
    question: &str,
    video_ref: &str,
    template: &str,
    config: EpisodeConfig,
) -> EpisodeState {
    let history = History {
        question: question.to_string(),
        video_ref: video_ref.to_string(),
        template: template.to_string(),
        turns: Vec::new(),
    };
    let summary = summarize(&history, config.summary_window);
    EpisodeState { history, summary, config, terminated: None, final_answer: None }
}

const FORMAT_REMINDER: &str = "\nYour previous reply did not follow the required format. \
Emit exactly one <think>...</think> block followed by exactly one action tag.";

fn execute_search<B: EmbedBackend>(
    action: &Action,
    bank: &EvidenceBank,
    backend: &B,
    config: &EpisodeConfig,
) -> Result<Option<EvidenceSet>, EpisodeError> {
    let es = match action {
        Action::SearchImage { query } => {
            match retrieve_image(bank, backend, query, config.k_img) {
                Ok(es) => es,
                // An empty modality is surfaced as NO_RESULTS, not an error,
                // so the policy can re-query the other bank.
                Err(RetrievalError::EmptyBank) => {
                    EvidenceSet::empty(crate::retrieval::Modality::Image, query)
                }
                Err(e) => return Err(e.into()),
            }
        }
        Action::SearchAudio { query } => match retrieve_audio(bank, backend, query, config.k_aud) {
            Ok(es) => es,
            Err(RetrievalError::EmptyBank) => {
                EvidenceSet::empty(crate::retrieval::Modality::Audio, query)
            }
            Err(e) => return Err(e.into()),
        },
        Action::Answer { .. } => return Ok(None),
    };
    Ok(Some(es.truncated(config.max_attached_segments)))
}

/// Advances the episode by one turn. Returns the parsed turn and the
/// observation, if the action was a search.
pub fn step<P: PolicyBackend, B: EmbedBackend>(
    state: &mut EpisodeState,
    policy: &mut P,
    bank: &EvidenceBank,
    backend: &B,
    grammar: &TagGrammar,
) -> Result<(Option<ParsedTurn>, Option<EvidenceSet>), EpisodeError> {
    if state.terminated.is_some() {
        return Err(EpisodeError::AlreadyTerminated);
    }

    let raw = match policy.complete(&state.summary) {
        Ok(raw) => raw,
        Err(e) => {
            state.terminated = Some(TerminationReason::PolicyFailure);
            return Err(EpisodeError::Policy(e));
        }
    };

    let parsed = match parse_turn(&raw, grammar, state.config.parse_mode) {
        Ok(p) => Ok((raw, p)),
        Err(first_err) if state.config.reprompt_on_parse_failure => {
            let mut ctx = state.summary.clone();
            ctx.push_str(FORMAT_REMINDER);
            match policy.complete(&ctx) {
                Ok(raw2) => match parse_turn(&raw2, grammar, state.config.parse_mode) {
                    Ok(p) => Ok((raw2, p)),
                    Err(e) => Err(e),
                },
                Err(_) => Err(first_err),
            }
        }
        Err(e) => Err(e),
    };

    let (raw, parsed) = match parsed {
        Ok(pair) => pair,
        Err(_e) => {
            // Second failure (or first, when re-prompting is off): terminate
            // with an empty answer.
            state.terminated = Some(TerminationReason::ParseFailure);
            state.final_answer = Some(String::new());
            return Ok((None, None));
        }
    };

    let observation = execute_search(&parsed.action, bank, backend, &state.config)?;
    state.history.turns.push(HistoryTurn {
        raw,
        parsed: parsed.clone(),
        observation: observation.clone(),
    });

    if let Action::Answer { text } = &parsed.action {
        state.terminated = Some(TerminationReason::Answered);
        state.final_answer = Some(text.clone());
    } else if state.history.turns.len() >= state.config.max_turns {
        state.terminated = Some(TerminationReason::Budget);
    }
    state.summary = summarize(&state.history, state.config.summary_window);
    Ok((Some(parsed), observation))
}

/// Runs a full episode to termination and packages the trajectory.
pub fn run_episode<P: PolicyBackend, B: EmbedBackend>(
    episode_id: &str,
    question: &str,
    video_ref: &str,
    template: &str,
    bank: &EvidenceBank,
    backend: &B,
    policy: &mut P,
    grammar: &TagGrammar,
    config: EpisodeConfig,
) -> Result<TrajectoryRecord, EpisodeError> {
    let mut state = init_episode(question, video_ref, template, config);
    while state.terminated.is_none() {
        step(&mut state, policy, bank, backend, grammar)?;
    }
    Ok(TrajectoryRecord {
        episode_id: episode_id.to_string(),
        question: question.to_string(),
        turns: state.history.turns,
        final_answer: state.final_answer,
        termination: state.terminated.unwrap(),
        reward: None,
    })
}
