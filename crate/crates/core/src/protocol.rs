//! Tag-delimited agent output grammar and the gated reward.
//!
//! Each turn the agent emits exactly one `<think>` block followed by exactly
//! one action tag: `<search_image>`, `<search_audio>`, or `<answer>`. The
//! format reward counts well-formed required tags across the whole
//! trajectory, the performance reward is binary exact match, and the gate
//! credits performance only when the format reward clears the threshold.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub const THINK_TAG: &str = "think";
pub const SEARCH_IMAGE_TAG: &str = "search_image";
pub const SEARCH_AUDIO_TAG: &str = "search_audio";
pub const ANSWER_TAG: &str = "answer";

/// Default gate threshold on the format reward.
pub const DEFAULT_GATE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseError {
    /// A tag is opened but never closed, closed without opening, or nested.
    MalformedTags { detail: String },
    /// More than one action tag in a single turn (strict mode).
    MultipleActions,
    MissingThink,
    MissingAction,
    /// Search actions must carry a nonempty query.
    EmptyQuery,
    /// Text outside tags (strict mode).
    StrayText { snippet: String },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::MalformedTags { detail } => write!(f, "malformed tags: {detail}"),
            ParseError::MultipleActions => write!(f, "more than one action tag in a turn"),
            ParseError::MissingThink => write!(f, "missing <think> block"),
            ParseError::MissingAction => write!(f, "missing action tag"),
            ParseError::EmptyQuery => write!(f, "search action has an empty query"),
            ParseError::StrayText { snippet } => write!(f, "text outside tags: {snippet:?}"),
        }
    }
}

impl core::error::Error for ParseError {}

/// The output grammar: tag names, the required-tag set scored by the format
/// reward, and the gate threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagGrammar {
    pub think_tag: String,
    pub action_tags: Vec<String>,
    /// Tags whose presence (anywhere in the trajectory) the format reward
    /// counts. Default `[think, answer]`, K = 2.
    pub required_tags: Vec<String>,
    pub gate_threshold: f64,
}

impl Default for TagGrammar {
    fn default() -> Self {
        TagGrammar {
            think_tag: THINK_TAG.to_string(),
            action_tags: [SEARCH_IMAGE_TAG, SEARCH_AUDIO_TAG, ANSWER_TAG]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            required_tags: [THINK_TAG, ANSWER_TAG].iter().map(|s| s.to_string()).collect(),
            gate_threshold: DEFAULT_GATE_THRESHOLD,
        }
    }
}

/// One agent action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    SearchImage { query: String },
    SearchAudio { query: String },
    Answer { text: String },
}

impl Action {
    pub fn tag(&self) -> &'static str {
        match self {
            Action::SearchImage { .. } => SEARCH_IMAGE_TAG,
            Action::SearchAudio { .. } => SEARCH_AUDIO_TAG,
            Action::Answer { .. } => ANSWER_TAG,
        }
    }

    fn body(&self) -> &str {
        match self {
            Action::SearchImage { query } | Action::SearchAudio { query } => query,
            Action::Answer { text } => text,
        }
    }
}

/// One parsed agent emission: think trace, action, and the continue flag
/// (false iff the action is a terminal answer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedTurn {
    pub think: String,
    pub action: Action,
    pub continue_flag: bool,
}

impl ParsedTurn {
    pub fn new(think: impl Into<String>, action: Action) -> Self {
        let continue_flag = !matches!(action, Action::Answer { .. });
        ParsedTurn { think: think.into(), action, continue_flag }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Reject any text outside tags or multiple action tags.
    Strict,
    /// Take the first well-formed think and first well-formed action; ignore
    /// trailing text.
    Lenient,
}

/// A `<tag>body</tag>` span found in raw text.
#[derive(Debug, Clone, PartialEq)]
struct TagSpan {
    tag: String,
    body: String,
    start: usize,
    end: usize,
}

/// Scans for well-formed, non-nested `<tag>...</tag>` spans over the known
/// tag vocabulary, left to right.
fn scan_tags(raw: &str, known: &[&str]) -> Result<Vec<TagSpan>, ParseError> {
    let mut spans = Vec::new();
    let mut pos = 0;
    while let Some(rel) = raw[pos..].find('<') {
        let at = pos + rel;
        let rest = &raw[at..];
        let mut matched = false;
        for tag in known {
            let open = alloc::format!("<{tag}>");
            let close = alloc::format!("</{tag}>");
            if rest.starts_with(open.as_str()) {
                let body_start = at + open.len();
                let Some(close_rel) = raw[body_start..].find(close.as_str()) else {
                    return Err(ParseError::MalformedTags {
                        detail: alloc::format!("<{tag}> is never closed"),
                    });
                };
                let body = &raw[body_start..body_start + close_rel];
                // No nesting: the body may not open another known tag.
                for inner in known {
                    if body.contains(alloc::format!("<{inner}>").as_str()) {
                        return Err(ParseError::MalformedTags {
                            detail: alloc::format!("<{inner}> nested inside <{tag}>"),
                        });
                    }
                }
                let end = body_start + close_rel + close.len();
                spans.push(TagSpan {
                    tag: tag.to_string(),
                    body: body.to_string(),
                    start: at,
                    end,
                });
                pos = end;
                matched = true;
                break;
            }
            if rest.starts_with(close.as_str()) {
                return Err(ParseError::MalformedTags {
                    detail: alloc::format!("</{tag}> closed without opening"),
                });
            }
        }
        if !matched {
            pos = at + 1;
        }
    }
    Ok(spans)
}

fn action_from_span(span: &TagSpan) -> Result<Action, ParseError> {
    let body = span.body.trim().to_string();
    match span.tag.as_str() {
        SEARCH_IMAGE_TAG => {
            if body.is_empty() {
                return Err(ParseError::EmptyQuery);
            }
            Ok(Action::SearchImage { query: body })
        }
        SEARCH_AUDIO_TAG => {
            if body.is_empty() {
                return Err(ParseError::EmptyQuery);
            }
            Ok(Action::SearchAudio { query: body })
        }
        ANSWER_TAG => Ok(Action::Answer { text: body }),
        other => Err(ParseError::MalformedTags { detail: alloc::format!("unknown action tag <{other}>") }),
    }
}

/// Parses one raw agent emission against the grammar.
pub fn parse_turn(raw: &str, grammar: &TagGrammar, mode: ParseMode) -> Result<ParsedTurn, ParseError> {
    let known: Vec<&str> = core::iter::once(grammar.think_tag.as_str())
        .chain(grammar.action_tags.iter().map(|s| s.as_str()))
        .collect();
    let spans = scan_tags(raw, &known)?;

    match mode {
        ParseMode::Strict => {
            // Exactly one think followed by exactly one action, nothing else.
            let mut cursor = 0;
            for span in &spans {
                let between = &raw[cursor..span.start];
                if !between.trim().is_empty() {
                    return Err(ParseError::StrayText { snippet: between.trim().to_string() });
                }
                cursor = span.end;
            }
            let tail = &raw[cursor..];
            if !tail.trim().is_empty() {
                return Err(ParseError::StrayText { snippet: tail.trim().to_string() });
            }

            let thinks: Vec<&TagSpan> =
                spans.iter().filter(|s| s.tag == grammar.think_tag).collect();
            let actions: Vec<&TagSpan> =
                spans.iter().filter(|s| grammar.action_tags.contains(&s.tag)).collect();
            if thinks.is_empty() {
                return Err(ParseError::MissingThink);
            }
            if thinks.len() > 1 {
                return Err(ParseError::MalformedTags {
                    detail: "more than one <think> block".to_string(),
                });
            }
            if actions.is_empty() {
                return Err(ParseError::MissingAction);
            }
            if actions.len() > 1 {
                return Err(ParseError::MultipleActions);
            }
            if actions[0].start < thinks[0].end {
                return Err(ParseError::MalformedTags {
                    detail: "action tag precedes the <think> block".to_string(),
                });
            }
            let action = action_from_span(actions[0])?;
            Ok(ParsedTurn::new(thinks[0].body.clone(), action))
        }
        ParseMode::Lenient => {
            let think = spans
                .iter()
                .find(|s| s.tag == grammar.think_tag)
                .ok_or(ParseError::MissingThink)?;
            let action_span = spans
                .iter()
                .find(|s| grammar.action_tags.contains(&s.tag) && s.start >= think.end)
                .ok_or(ParseError::MissingAction)?;
            let action = action_from_span(action_span)?;
            Ok(ParsedTurn::new(think.body.clone(), action))
        }
    }
}

/// Canonical serializer for one turn; `parse_turn` round-trips its output.
pub fn render_turn(turn: &ParsedTurn) -> String {
    alloc::format!(
        "<{think}>{z}</{think}><{tag}>{body}</{tag}>",
        think = THINK_TAG,
        z = turn.think,
        tag = turn.action.tag(),
        body = turn.action.body(),
    )
}

/// Format, performance, and gated reward for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub performance: f64,
    pub total: f64,
    pub matched_tags: Vec<bool>,
}

/// Format reward over the full trajectory text: each required tag scores 0.5
/// if at least one well-formed instance exists, capped at 1.0.
pub fn format_reward(trajectory_text: &str, grammar: &TagGrammar) -> (f64, Vec<bool>) {
    let known: Vec<&str> = grammar.required_tags.iter().map(|s| s.as_str()).collect();
    let spans = scan_tags(trajectory_text, &known).unwrap_or_default();
    let matched: Vec<bool> = grammar
        .required_tags
        .iter()
        .map(|t| spans.iter().any(|s| &s.tag == t))
        .collect();
    let count = matched.iter().filter(|m| **m).count() as f64;
    (f64::min(1.0, 0.5 * count), matched)
}

/// How answers are normalized before exact-match comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerNorm {
    /// Trim and case-fold.
    Plain,
    /// Trim, case-fold, then take the leading option letter of a
    /// multiple-choice answer like "B" or "b) the red car".
    MultipleChoice,
}

/// Applies the normalization pipeline to an answer string.
pub fn normalize_answer(answer: &str, norm: AnswerNorm) -> String {
    let lowered = answer.trim().to_lowercase();
    match norm {
        AnswerNorm::Plain => lowered,
        AnswerNorm::MultipleChoice => {
            let mut chars = lowered.chars();
            match (chars.next(), chars.next()) {
                // A bare letter, or a letter followed by a separator.
                (Some(c), rest) if c.is_ascii_alphabetic() => match rest {
                    None => c.to_string(),
                    Some(sep) if matches!(sep, ')' | '.' | ':' | ',' | ' ') => c.to_string(),
                    _ => lowered,
                },
                _ => lowered,
            }
        }
    }
}

/// Binary exact-match performance reward after normalization.
pub fn performance_reward(answer: &str, gold: &str, norm: AnswerNorm) -> f64 {
    debug_assert!(!gold.trim().is_empty(), "gold answer must be nonempty");
    if normalize_answer(answer, norm) == normalize_answer(gold, norm) {
        1.0
    } else {
        0.0
    }
}

/// Gated composition: performance is credited only when the format reward
/// clears the threshold (inclusive).
pub fn gated_reward(format: f64, performance: f64, threshold: f64) -> f64 {
    if format >= threshold {
        -1.0 + format + performance
    } else {
        -1.0 + format
    }
}

/// Full reward computation for a trajectory text and a gold answer.
pub fn score_text(
    trajectory_text: &str,
    answer: &str,
    gold: &str,
    grammar: &TagGrammar,
    norm: AnswerNorm,
) -> RewardBreakdown {
    let (format, matched_tags) = format_reward(trajectory_text, grammar);
    let performance = performance_reward(answer, gold, norm);
    let total = gated_reward(format, performance, grammar.gate_threshold);
    RewardBreakdown { format, performance, total, matched_tags }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> TagGrammar {
        TagGrammar::default()
    }

    #[test]
    fn parses_search_image_turn() {
        let raw = "<think>find the car</think><search_image>red car near curb</search_image>";
        let turn = parse_turn(raw, &g(), ParseMode::Strict).unwrap();
        assert_eq!(turn.think, "find the car");
        assert_eq!(turn.action, Action::SearchImage { query: "red car near curb".into() });
        assert!(turn.continue_flag);
    }

    #[test]
    fn answer_clears_continue_flag() {
        let turn = parse_turn("<think>done</think><answer>B</answer>", &g(), ParseMode::Strict).unwrap();
        assert_eq!(turn.action, Action::Answer { text: "B".into() });
        assert!(!turn.continue_flag);
    }

    #[test]
    fn strict_requires_action() {
        assert_eq!(
            parse_turn("<think>x</think>", &g(), ParseMode::Strict),
            Err(ParseError::MissingAction)
        );
    }

    #[test]
    fn strict_rejects_stray_text_and_multiple_actions() {
        let r = parse_turn(
            "preamble <think>x</think><answer>A</answer>",
            &g(),
            ParseMode::Strict,
        );
        assert!(matches!(r, Err(ParseError::StrayText { .. })));

        let r = parse_turn(
            "<think>x</think><search_audio>a</search_audio><answer>A</answer>",
            &g(),
            ParseMode::Strict,
        );
        assert_eq!(r, Err(ParseError::MultipleActions));
    }

    #[test]
    fn strict_rejects_malformed() {
        assert!(matches!(
            parse_turn("<think>x<answer>A</answer></think>", &g(), ParseMode::Strict),
            Err(ParseError::MalformedTags { .. })
        ));
        assert!(matches!(
            parse_turn("<think>x</think><answer>A", &g(), ParseMode::Strict),
            Err(ParseError::MalformedTags { .. })
        ));
        assert_eq!(
            parse_turn("<answer>A</answer>", &g(), ParseMode::Strict),
            Err(ParseError::MissingThink)
        );
    }

    #[test]
    fn empty_search_query_rejected() {
        assert_eq!(
            parse_turn("<think>x</think><search_image>  </search_image>", &g(), ParseMode::Strict),
            Err(ParseError::EmptyQuery)
        );
    }

    #[test]
    fn lenient_ignores_trailing_text() {
        let raw = "noise <think>x</think> more <answer>B</answer> trailing <answer>C</answer>";
        let turn = parse_turn(raw, &g(), ParseMode::Lenient).unwrap();
        assert_eq!(turn.action, Action::Answer { text: "B".into() });
    }

    #[test]
    fn render_round_trips() {
        let turn = ParsedTurn::new("look", Action::SearchAudio { query: "woohoo".into() });
        let parsed = parse_turn(&render_turn(&turn), &g(), ParseMode::Strict).unwrap();
        assert_eq!(parsed, turn);
    }

    #[test]
    fn format_reward_counts_and_caps() {
        // K=2, both matched: min(1.0, 0.5*2) = 1.0
        let (r, m) = format_reward("<think>x</think><answer>B</answer>", &g());
        assert_eq!(r, 1.0);
        assert_eq!(m, alloc::vec![true, true]);

        // K=2, one matched: 0.5
        let (r, _) = format_reward("<think>x</think>", &g());
        assert_eq!(r, 0.5);

        // K=3, all matched: the cap engages at min(1.0, 1.5).
        let mut g3 = g();
        g3.required_tags.push(SEARCH_AUDIO_TAG.into());
        let (r, m) = format_reward(
            "<think>x</think><search_audio>q</search_audio><answer>B</answer>",
            &g3,
        );
        assert_eq!(r, 1.0);
        assert_eq!(m, alloc::vec![true, true, true]);
    }

    #[test]
    fn format_reward_ignores_malformed_instances() {
        // Unclosed think: no well-formed instance, so nothing matches.
        let (r, m) = format_reward("<think>x", &g());
        assert_eq!(r, 0.0);
        assert_eq!(m, alloc::vec![false, false]);
    }

    #[test]
    fn performance_reward_examples() {
        assert_eq!(performance_reward("B", "B", AnswerNorm::MultipleChoice), 1.0);
        // Hand application of the pipeline: trim + case-fold + leading letter.
        assert_eq!(performance_reward("b) the red car", "B", AnswerNorm::MultipleChoice), 1.0);
        assert_eq!(performance_reward("C", "B", AnswerNorm::MultipleChoice), 0.0);
        assert_eq!(performance_reward("  Apple ", "apple", AnswerNorm::Plain), 1.0);
    }

    #[test]
    fn mc_normalization_keeps_words() {
        // A full word is not collapsed to its first letter.
        assert_eq!(normalize_answer("blue", AnswerNorm::MultipleChoice), "blue");
        assert_eq!(normalize_answer("B.", AnswerNorm::MultipleChoice), "b");
        assert_eq!(normalize_answer("b: red", AnswerNorm::MultipleChoice), "b");
    }

    #[test]
    fn gated_reward_branches() {
        assert_eq!(gated_reward(1.0, 1.0, 0.5), 1.0);
        // Gate inclusive at the threshold.
        assert_eq!(gated_reward(0.5, 1.0, 0.5), 0.5);
        // Performance withheld below the gate.
        assert!((gated_reward(0.4, 1.0, 0.5) - (-0.6)).abs() < 1e-12);
    }

    #[test]
    fn strict_accept_implies_full_format_reward() {
        // Any strict-accepted answer turn matches both default required tags.
        let raws = [
            "<think>a</think><answer>B</answer>",
            "<think></think><answer></answer>",
        ];
        for raw in raws {
            parse_turn(raw, &g(), ParseMode::Strict).unwrap();
            let (r, _) = format_reward(raw, &g());
            assert_eq!(r, 1.0);
        }
    }
}
