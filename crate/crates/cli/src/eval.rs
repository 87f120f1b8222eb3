//! Batch evaluation: run one episode per question over per-video banks,
//! fan out across a bounded rayon pool, and aggregate per-question records
//! into overall and per-category accuracy. Output order is input order
//! regardless of completion order.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use omnirag_core::embed::{DeterministicEmbedder, EmbedBackend};
use omnirag_core::episode::{run_episode, ScriptedPolicy, DEFAULT_TEMPLATE};
use omnirag_core::grpo::score_trajectory;
use omnirag_core::protocol::{AnswerNorm, TagGrammar};

use crate::config::{Config, ConfigError, HttpEndpoint};
use crate::formats::{FormatError, Question};
use crate::http::{AnyEmbedBackend, AnyPolicy, HttpChatPolicy, HttpEmbedBackend};
use crate::store::{load_bank, StoreError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no bank directory for video {video_id} under {root}")]
    MissingBank { video_id: String, root: String },
    #[error("bad policy spec {spec:?}: expected scripted:<path> or chat:[url]")]
    BadPolicySpec { spec: String },
    #[error("scripted policy file names no emissions for question {question_id}")]
    MissingScript { question_id: String },
    #[error("no chat backend configured for a chat: policy")]
    MissingChatBackend,
    #[error("bank {video_id} was embedded by {backend_id:?}, which no configured backend matches")]
    UnknownBackend { video_id: String, backend_id: String },
    #[error("episode failed on question {question_id}: {detail}")]
    Episode { question_id: String, detail: String },
}

// ---------------------------------------------------------------------------
// Policy specification
// ---------------------------------------------------------------------------

/// How each question's policy is built: a scripted emissions file or a chat
/// endpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Path to a JSON file: either an array of emissions applied to every
    /// question, or a map of question_id to emissions.
    Scripted(String),
    /// Chat endpoint URL; empty means "use the configured chat backend".
    Chat(String),
}

impl PolicySpec {
    pub fn parse(spec: &str) -> Result<PolicySpec, EvalError> {
        if let Some(path) = spec.strip_prefix("scripted:") {
            if path.is_empty() {
                return Err(EvalError::BadPolicySpec { spec: spec.to_string() });
            }
            return Ok(PolicySpec::Scripted(path.to_string()));
        }
        if let Some(url) = spec.strip_prefix("chat:") {
            return Ok(PolicySpec::Chat(url.to_string()));
        }
        Err(EvalError::BadPolicySpec { spec: spec.to_string() })
    }
}

/// Parsed scripted emissions: shared list or per-question map.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScriptedEmissions {
    Shared(Vec<String>),
    PerQuestion(BTreeMap<String, Vec<String>>),
}

impl ScriptedEmissions {
    pub fn load(path: &Path) -> Result<ScriptedEmissions, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text).map_err(|e| FormatError::Malformed {
            what: "scripted policy file",
            path: path.display().to_string(),
            detail: e.to_string(),
        })?)
    }

    fn for_question(&self, question_id: &str) -> Result<Vec<String>, EvalError> {
        match self {
            ScriptedEmissions::Shared(v) => Ok(v.clone()),
            ScriptedEmissions::PerQuestion(map) => map
                .get(question_id)
                .cloned()
                .ok_or_else(|| EvalError::MissingScript { question_id: question_id.to_string() }),
        }
    }
}

/// Reconstructs the backend a bank was embedded with. Deterministic ids are
/// self-describing; anything else must match the configured HTTP backend.
pub fn resolve_backend(
    video_id: &str,
    backend_id: &str,
    config: &Config,
) -> Result<AnyEmbedBackend, EvalError> {
    if let Some(rest) = backend_id.strip_prefix("deterministic-test:") {
        let mut parts = rest.split(':');
        let seed = parts.next().and_then(|s| s.parse::<u64>().ok());
        let dim = parts.next().and_then(|s| s.parse::<usize>().ok());
        if let (Some(seed), Some(dim), None) = (seed, dim, parts.next()) {
            return Ok(AnyEmbedBackend::Deterministic(DeterministicEmbedder::with_dimension(
                seed, dim,
            )));
        }
    }
    if let Some(endpoint) = &config.embed_backend {
        let http = HttpEmbedBackend::new(endpoint.clone(), config.embed_dimension)?;
        if http.backend_id() == backend_id {
            return Ok(AnyEmbedBackend::Http(http));
        }
    }
    Err(EvalError::UnknownBackend {
        video_id: video_id.to_string(),
        backend_id: backend_id.to_string(),
    })
}

pub fn build_policy(
    spec: &PolicySpec,
    emissions: &Option<ScriptedEmissions>,
    question_id: &str,
    config: &Config,
) -> Result<AnyPolicy, EvalError> {
    match spec {
        PolicySpec::Scripted(_) => {
            let emissions = emissions.as_ref().expect("loaded with the spec");
            Ok(AnyPolicy::Scripted(ScriptedPolicy::new(emissions.for_question(question_id)?)))
        }
        PolicySpec::Chat(url) => {
            let mut endpoint = match (&config.chat_backend, url.is_empty()) {
                (Some(ep), _) => ep.clone(),
                (None, false) => HttpEndpoint::new(url.clone(), "default"),
                (None, true) => return Err(EvalError::MissingChatBackend),
            };
            if !url.is_empty() {
                endpoint.url = url.clone();
            }
            Ok(AnyPolicy::Chat(HttpChatPolicy::new(
                endpoint,
                config.episode.temperature,
                config.episode.max_new_tokens,
            )?))
        }
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// One evaluated question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub category: String,
    pub predicted: String,
    pub gold: String,
    pub correct: bool,
    pub turns_used: usize,
    pub retrievals_used: usize,
}

pub const DEFAULT_CATEGORY: &str = "uncategorized";

/// Batch evaluation output. `overall_accuracy` is the mean of per-question
/// correctness, not the mean of category means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: Config,
    pub questions: usize,
    pub overall_accuracy: f64,
    pub per_category_accuracy: BTreeMap<String, f64>,
    pub records: Vec<QuestionRecord>,
}

/// Runs every question through an episode and aggregates the report.
/// Episodes fan out over a pool of `config.workers` threads; records come
/// back in question order.
pub fn run_eval(
    questions: &[Question],
    bank_root: &Path,
    spec: &PolicySpec,
    config: &Config,
    grammar: &TagGrammar,
) -> Result<EvalReport, EvalError> {
    let emissions = match spec {
        PolicySpec::Scripted(path) => Some(ScriptedEmissions::load(Path::new(path))?),
        PolicySpec::Chat(_) => None,
    };

    // Load each referenced bank once, up front.
    let mut banks = BTreeMap::new();
    for q in questions {
        if banks.contains_key(&q.video_id) {
            continue;
        }
        let dir = bank_root.join(&q.video_id);
        if !dir.is_dir() {
            return Err(EvalError::MissingBank {
                video_id: q.video_id.clone(),
                root: bank_root.display().to_string(),
            });
        }
        let bank = load_bank(&dir)?;
        let backend = resolve_backend(&q.video_id, &bank.embed_backend_id, config)?;
        banks.insert(q.video_id.clone(), (bank, backend));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .expect("worker pool builds");
    let records: Result<Vec<QuestionRecord>, EvalError> = pool.install(|| {
        questions
            .par_iter()
            .map(|q| {
                let (bank, backend) = banks.get(&q.video_id).expect("preloaded");
                let mut policy = build_policy(spec, &emissions, &q.question_id, config)?;
                let question_text = match &q.choices {
                    Some(choices) => format!("{}\n{}", q.question, choices.join("\n")),
                    None => q.question.clone(),
                };
                let record = run_episode(
                    &q.question_id,
                    &question_text,
                    &q.video_id,
                    DEFAULT_TEMPLATE,
                    bank,
                    backend,
                    &mut policy,
                    grammar,
                    config.episode.clone(),
                )
                .map_err(|e| EvalError::Episode {
                    question_id: q.question_id.clone(),
                    detail: e.to_string(),
                })?;
                let norm = if q.choices.is_some() {
                    AnswerNorm::MultipleChoice
                } else {
                    AnswerNorm::Plain
                };
                let reward = score_trajectory(&record, &q.gold, grammar, norm);
                Ok(QuestionRecord {
                    question_id: q.question_id.clone(),
                    category: q.category.clone().unwrap_or_else(|| DEFAULT_CATEGORY.to_string()),
                    predicted: record.final_answer.clone().unwrap_or_default(),
                    gold: q.gold.clone(),
                    correct: reward.performance == 1.0,
                    turns_used: record.turns.len(),
                    retrievals_used: record.turns.iter().filter(|t| t.observation.is_some()).count(),
                })
            })
            .collect()
    });
    let records = records?;

    let n = records.len().max(1) as f64;
    let overall_accuracy = records.iter().filter(|r| r.correct).count() as f64 / n;
    let mut per_cat: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &records {
        let e = per_cat.entry(r.category.clone()).or_insert((0, 0));
        e.0 += r.correct as usize;
        e.1 += 1;
    }
    let per_category_accuracy = per_cat
        .into_iter()
        .map(|(k, (c, t))| (k, c as f64 / t as f64))
        .collect();

    Ok(EvalReport {
        config: config.clone(),
        questions: records.len(),
        overall_accuracy,
        per_category_accuracy,
        records,
    })
}
