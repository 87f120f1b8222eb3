//! Group-relative policy optimization.
//!
//! Two layers:
//!
//! * a backend-agnostic loss/advantage library over logged per-token
//!   probability sequences ([`standardized_advantages`], [`grpo_loss`]), so an
//!   external trainer can consume it; and
//! * an end-to-end trainer on a tabular softmax [`ToyPolicy`] in a
//!   [`ToyRetrievalEnv`], with analytic gradients that finite differences can
//!   verify.
//!
//! Advantages are rewards standardized within the sampled group (population
//! variance). The surrogate is the token-level clipped ratio objective; the
//! KL term is the exact categorical KL to the reference policy, averaged over
//! all tokens (the toy vocabulary is enumerable, so no sampled estimator is
//! needed).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::episode::TrajectoryRecord;
use crate::protocol::{
    format_reward, gated_reward, performance_reward, AnswerNorm, RewardBreakdown, TagGrammar,
};
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub enum GrpoError {
    /// Standardized advantages need at least two rewards.
    GroupTooSmall { got: usize },
    /// A policy ratio or logprob is not finite.
    NonFiniteRatio { trajectory: usize, token: usize },
    /// Logged sequences are not aligned.
    LengthMismatch { trajectory: usize },
    EmptyTrajectory { trajectory: usize },
    /// Logits left the finite range during training.
    DivergenceDetected { step: usize },
}

impl fmt::Display for GrpoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrpoError::GroupTooSmall { got } => {
                write!(f, "rollout group needs >= 2 trajectories, got {got}")
            }
            GrpoError::NonFiniteRatio { trajectory, token } => {
                write!(f, "non-finite policy ratio at trajectory {trajectory}, token {token}")
            }
            GrpoError::LengthMismatch { trajectory } => {
                write!(f, "logprob sequences misaligned in trajectory {trajectory}")
            }
            GrpoError::EmptyTrajectory { trajectory } => {
                write!(f, "trajectory {trajectory} has no tokens")
            }
            GrpoError::DivergenceDetected { step } => {
                write!(f, "non-finite logits at training step {step}")
            }
        }
    }
}

impl core::error::Error for GrpoError {}

/// GRPO hyperparameters. The learning-rate default matches the reported
/// fine-tuning setting and is meant to be overridden for toy runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    /// Ratio clip half-width.
    pub clip_epsilon: f64,
    /// KL penalty coefficient (beta).
    pub kl_coefficient: f64,
    /// Numerical-stability constant in the advantage denominator.
    pub advantage_epsilon: f64,
    /// Group size M.
    pub rollouts: usize,
    pub learning_rate: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            clip_epsilon: 0.2,
            kl_coefficient: 0.001,
            advantage_epsilon: 1e-8,
            rollouts: 5,
            learning_rate: 5e-7,
        }
    }
}

impl GrpoConfig {
    /// Settings that reliably solve the toy environment: a tabular softmax
    /// needs a far larger step size than a fine-tuned LLM, and wider groups
    /// stabilize the group-relative advantages when successes are rare.
    pub fn toy() -> Self {
        GrpoConfig { rollouts: 16, learning_rate: 2.0, ..GrpoConfig::default() }
    }
}

/// Standardizes rewards within a group: `(R - mean) / sqrt(pop_var + eps)`.
pub fn standardized_advantages(rewards: &[f64], eps: f64) -> Result<Vec<f64>, GrpoError> {
    let m = rewards.len();
    if m < 2 {
        return Err(GrpoError::GroupTooSmall { got: m });
    }
    let mean = rewards.iter().sum::<f64>() / m as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / m as f64;
    let denom = libm::sqrt(var + eps);
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// One logged trajectory: aligned per-token logprobs under the current and
/// pre-update policies, the exact per-token KL to the reference policy, and
/// the trajectory reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedTrajectory {
    pub logp_new: Vec<f64>,
    pub logp_old: Vec<f64>,
    /// `KL(pi_theta(.|s_t) || pi_ref(.|s_t))` per token; see
    /// [`categorical_kl`].
    pub kl_to_ref: Vec<f64>,
    pub reward: f64,
}

/// A batch of M sampled trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub trajectories: Vec<LoggedTrajectory>,
}

/// Exact KL between two categorical distributions given as probabilities.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (libm::log(*pi) - libm::log(*qi)))
        .sum()
}

/// Diagnostics emitted with the objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoLossOutput {
    /// The maximized objective J (surrogate minus the KL penalty).
    pub objective: f64,
    pub surrogate: f64,
    /// Mean per-token KL to the reference policy.
    pub mean_kl: f64,
    /// Fraction of tokens where the clipped branch was selected.
    pub clip_fraction: f64,
    pub advantages: Vec<f64>,
}

fn clip(r: f64, eps: f64) -> f64 {
    r.clamp(1.0 - eps, 1.0 + eps)
}

/// Token-level clipped surrogate with KL penalty over a logged group:
/// `J = (1/M) sum_i (1/|tau_i|) sum_t min(r A_i, clip(r, 1 +- eps) A_i)
///      - beta * mean_t KL_t`.
pub fn grpo_loss(group: &RolloutGroup, cfg: &GrpoConfig) -> Result<GrpoLossOutput, GrpoError> {
    let m = group.trajectories.len();
    if m < 2 {
        return Err(GrpoError::GroupTooSmall { got: m });
    }
    for (i, traj) in group.trajectories.iter().enumerate() {
        if traj.logp_new.len() != traj.logp_old.len() || traj.logp_new.len() != traj.kl_to_ref.len()
        {
            return Err(GrpoError::LengthMismatch { trajectory: i });
        }
        if traj.logp_new.is_empty() {
            return Err(GrpoError::EmptyTrajectory { trajectory: i });
        }
    }

    let rewards: Vec<f64> = group.trajectories.iter().map(|t| t.reward).collect();
    let advantages = standardized_advantages(&rewards, cfg.advantage_epsilon)?;

    let mut surrogate = 0.0;
    let mut kl_sum = 0.0;
    let mut tokens = 0usize;
    let mut clipped = 0usize;
    for (i, traj) in group.trajectories.iter().enumerate() {
        let adv = advantages[i];
        let len = traj.logp_new.len() as f64;
        let mut per_traj = 0.0;
        for (t, (lp_new, lp_old)) in traj.logp_new.iter().zip(&traj.logp_old).enumerate() {
            let ratio = libm::exp(lp_new - lp_old);
            if !ratio.is_finite() {
                return Err(GrpoError::NonFiniteRatio { trajectory: i, token: t });
            }
            let unclipped = ratio * adv;
            let clipped_term = clip(ratio, cfg.clip_epsilon) * adv;
            per_traj += unclipped.min(clipped_term);
            if clipped_term < unclipped {
                clipped += 1;
            }
        }
        surrogate += per_traj / len;
        kl_sum += traj.kl_to_ref.iter().sum::<f64>();
        tokens += traj.kl_to_ref.len();
    }
    surrogate /= m as f64;
    let mean_kl = kl_sum / tokens as f64;
    Ok(GrpoLossOutput {
        objective: surrogate - cfg.kl_coefficient * mean_kl,
        surrogate,
        mean_kl,
        clip_fraction: clipped as f64 / tokens as f64,
        advantages,
    })
}

/// Scores a recorded episode trajectory against the gold answer.
pub fn score_trajectory(
    record: &TrajectoryRecord,
    gold: &str,
    grammar: &TagGrammar,
    norm: AnswerNorm,
) -> RewardBreakdown {
    let text = record.trajectory_text();
    let (fmt, matched_tags) = format_reward(&text, grammar);
    let perf = match &record.final_answer {
        Some(answer) if !answer.is_empty() => performance_reward(answer, gold, norm),
        _ => 0.0,
    };
    let total = gated_reward(fmt, perf, grammar.gate_threshold);
    RewardBreakdown { format: fmt, performance: perf, total, matched_tags }
}

// ---------------------------------------------------------------------------
// Tabular toy policy
// ---------------------------------------------------------------------------

/// Tabular softmax policy: one logit row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub logits: Vec<Vec<f64>>,
}

impl ToyPolicy {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        ToyPolicy { logits: vec![vec![0.0; num_actions]; num_states] }
    }

    pub fn num_states(&self) -> usize {
        self.logits.len()
    }

    pub fn num_actions(&self) -> usize {
        self.logits.first().map_or(0, Vec::len)
    }

    /// Softmax row for one state; sums to 1 within 1e-9.
    pub fn probs(&self, state: usize) -> Vec<f64> {
        let row = &self.logits[state];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|l| libm::exp(l - max)).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    pub fn logp(&self, state: usize, action: usize) -> f64 {
        let row = &self.logits[state];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|l| libm::exp(l - max)).sum();
        row[action] - max - libm::log(z)
    }

    pub fn sample<R: Rng>(&self, state: usize, rng: &mut R) -> usize {
        self.sample_slice(state, 0, self.num_actions(), rng)
    }

    /// Samples from the renormalized `lo..hi` slice of the row's softmax.
    pub fn sample_slice<R: Rng>(&self, state: usize, lo: usize, hi: usize, rng: &mut R) -> usize {
        let probs = self.probs(state);
        let z: f64 = probs[lo..hi].iter().sum();
        let u: f64 = rng.random_range(0.0..1.0) * z;
        let mut acc = 0.0;
        for a in lo..hi {
            acc += probs[a];
            if u < acc {
                return a;
            }
        }
        hi - 1
    }

    pub fn is_finite(&self) -> bool {
        self.logits.iter().all(|row| row.iter().all(|l| l.is_finite()))
    }
}

// ---------------------------------------------------------------------------
// Toy retrieval environment
// ---------------------------------------------------------------------------

/// A desk-scale stand-in for the retrieval environment: a needle hides in one
/// (segment, modality) slot; querying it yields a hit observation, and only an
/// agent that has seen the hit can answer correctly (evidence-gated success).
///
/// State encoding for the tabular policy:
/// * `0..budget`: no hit yet, turn index;
/// * `budget + s`: a hit was observed in segment `s`.
///
/// Action encoding:
/// * `0..S`: image query on segment `a`;
/// * `S..2S`: audio query on segment `a - S`;
/// * `2S..3S`: answer segment `a - 2S`.
///
/// The final budget turn is an answer deadline: the action is drawn from the
/// answer slice of the policy row (renormalized), mirroring how the episode
/// engine forces termination at the turn budget. Deadline draws come from a
/// masked distribution, so they are excluded from the logged policy tokens
/// the loss differentiates through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRetrievalEnv {
    pub num_segments: usize,
    /// Max actions per episode, including the answer.
    pub budget: usize,
}

impl Default for ToyRetrievalEnv {
    fn default() -> Self {
        ToyRetrievalEnv { num_segments: 8, budget: 6 }
    }
}

impl ToyRetrievalEnv {
    pub fn new(num_segments: usize, budget: usize) -> Self {
        ToyRetrievalEnv { num_segments, budget }
    }

    pub fn num_states(&self) -> usize {
        self.budget + self.num_segments
    }

    pub fn num_actions(&self) -> usize {
        3 * self.num_segments
    }

    fn hit_state(&self, segment: usize) -> usize {
        self.budget + segment
    }
}

/// Action semantics in the toy environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyAction {
    QueryImage(usize),
    QueryAudio(usize),
    Answer(usize),
}

impl ToyAction {
    pub fn decode(action: usize, num_segments: usize) -> ToyAction {
        if action < num_segments {
            ToyAction::QueryImage(action)
        } else if action < 2 * num_segments {
            ToyAction::QueryAudio(action - num_segments)
        } else {
            ToyAction::Answer(action - 2 * num_segments)
        }
    }
}

/// One sampled toy episode with its symbolic trace and reward breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRollout {
    /// `(state, action)` pairs; these are the tokens the loss sees.
    pub steps: Vec<(usize, usize)>,
    pub reward: f64,
    pub format: f64,
    pub performance: f64,
}

/// Renders the toy episode as a tag-delimited trace so the reward flows
/// through the protocol module's gated composition.
fn render_toy_trace(actions: &[ToyAction]) -> String {
    let mut text = String::new();
    for (t, action) in actions.iter().enumerate() {
        match action {
            ToyAction::QueryImage(s) => {
                text.push_str(&format!(
                    "<think>turn {t}</think><search_image>segment {s}</search_image>\n"
                ));
            }
            ToyAction::QueryAudio(s) => {
                text.push_str(&format!(
                    "<think>turn {t}</think><search_audio>segment {s}</search_audio>\n"
                ));
            }
            ToyAction::Answer(s) => {
                text.push_str(&format!("<think>turn {t}</think><answer>{s}</answer>\n"));
            }
        }
    }
    text
}

/// Samples one episode from the policy. The needle is drawn from the rng.
pub fn sample_toy_rollout<R: Rng>(
    env: &ToyRetrievalEnv,
    policy: &ToyPolicy,
    grammar: &TagGrammar,
    rng: &mut R,
) -> ToyRollout {
    let needle_segment = rng.random_range(0..env.num_segments);
    let needle_is_audio = rng.random_range(0..2u32) == 1;

    let mut steps = Vec::new();
    let mut actions = Vec::new();
    let mut hit: Option<usize> = None;
    let mut answer: Option<usize> = None;
    let mut state = 0usize;
    for turn in 0..env.budget {
        let deadline = turn + 1 == env.budget;
        let action = if deadline {
            policy.sample_slice(state, 2 * env.num_segments, 3 * env.num_segments, rng)
        } else {
            policy.sample(state, rng)
        };
        if !deadline {
            steps.push((state, action));
        }
        let decoded = ToyAction::decode(action, env.num_segments);
        actions.push(decoded);
        match decoded {
            ToyAction::Answer(a) => {
                answer = Some(a);
                break;
            }
            ToyAction::QueryImage(s) => {
                if s == needle_segment && !needle_is_audio {
                    hit = Some(s);
                }
            }
            ToyAction::QueryAudio(s) => {
                if s == needle_segment && needle_is_audio {
                    hit = Some(s);
                }
            }
        }
        state = match hit {
            Some(s) => env.hit_state(s),
            None => turn + 1,
        };
    }

    let trace = render_toy_trace(&actions);
    let (fmt, _) = format_reward(&trace, grammar);
    // Evidence-gated success: a correct answer counts only if the needle was
    // actually retrieved first.
    let performance = match answer {
        Some(a) if hit.is_some() => {
            performance_reward(&a.to_string(), &needle_segment.to_string(), AnswerNorm::Plain)
        }
        _ => 0.0,
    };
    let reward = gated_reward(fmt, performance, grammar.gate_threshold);
    ToyRollout { steps, reward, format: fmt, performance }
}

/// The scripted reference policy: enumerate distinct (segment, modality)
/// probes in a fixed order, answer the hit segment as soon as the needle is
/// found, and spend the final turn answering regardless. This is reward-optimal
/// for the environment: success requires evidence, and distinct probes maximize
/// hit probability.
pub fn sample_scripted_optimal_rollout<R: Rng>(
    env: &ToyRetrievalEnv,
    grammar: &TagGrammar,
    rng: &mut R,
) -> ToyRollout {
    let needle_segment = rng.random_range(0..env.num_segments);
    let needle_is_audio = rng.random_range(0..2u32) == 1;

    let mut steps = Vec::new();
    let mut actions = Vec::new();
    let mut hit: Option<usize> = None;
    let mut answer: Option<usize> = None;
    let mut state = 0usize;
    for turn in 0..env.budget {
        let action = match hit {
            Some(s) => 2 * env.num_segments + s,
            None if turn + 1 == env.budget => 2 * env.num_segments, // answer something
            None => {
                // Probe combo `turn`: segments first over images, then audio.
                let combo = turn % (2 * env.num_segments);
                combo
            }
        };
        steps.push((state, action));
        let decoded = ToyAction::decode(action, env.num_segments);
        actions.push(decoded);
        match decoded {
            ToyAction::Answer(a) => {
                answer = Some(a);
                break;
            }
            ToyAction::QueryImage(s) => {
                if s == needle_segment && !needle_is_audio {
                    hit = Some(s);
                }
            }
            ToyAction::QueryAudio(s) => {
                if s == needle_segment && needle_is_audio {
                    hit = Some(s);
                }
            }
        }
        state = match hit {
            Some(s) => env.hit_state(s),
            None => turn + 1,
        };
    }

    let trace = render_toy_trace(&actions);
    let (fmt, _) = format_reward(&trace, grammar);
    let performance = match answer {
        Some(a) if hit.is_some() => {
            performance_reward(&a.to_string(), &needle_segment.to_string(), AnswerNorm::Plain)
        }
        _ => 0.0,
    };
    let reward = gated_reward(fmt, performance, grammar.gate_threshold);
    ToyRollout { steps, reward, format: fmt, performance }
}

/// Aggregate statistics over evaluation episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyEvalStats {
    pub mean_reward: f64,
    pub mean_format: f64,
    pub mean_performance: f64,
}

pub fn evaluate_policy(
    env: &ToyRetrievalEnv,
    policy: &ToyPolicy,
    grammar: &TagGrammar,
    episodes: usize,
    seed: u64,
) -> ToyEvalStats {
    let mut reward = 0.0;
    let mut fmt = 0.0;
    let mut perf = 0.0;
    for i in 0..episodes {
        let mut rng = stream_rng(seed, i as u64);
        let r = sample_toy_rollout(env, policy, grammar, &mut rng);
        reward += r.reward;
        fmt += r.format;
        perf += r.performance;
    }
    let n = episodes as f64;
    ToyEvalStats { mean_reward: reward / n, mean_format: fmt / n, mean_performance: perf / n }
}

pub fn evaluate_scripted_optimal(
    env: &ToyRetrievalEnv,
    grammar: &TagGrammar,
    episodes: usize,
    seed: u64,
) -> ToyEvalStats {
    let mut reward = 0.0;
    let mut fmt = 0.0;
    let mut perf = 0.0;
    for i in 0..episodes {
        let mut rng = stream_rng(seed, i as u64);
        let r = sample_scripted_optimal_rollout(env, grammar, &mut rng);
        reward += r.reward;
        fmt += r.format;
        perf += r.performance;
    }
    let n = episodes as f64;
    ToyEvalStats { mean_reward: reward / n, mean_format: fmt / n, mean_performance: perf / n }
}

// ---------------------------------------------------------------------------
// Toy objective and analytic gradient
// ---------------------------------------------------------------------------

/// The GRPO objective for a toy rollout group, as a function of `policy`.
/// `old` supplies the ratio denominators and `reference` the KL anchor; both
/// are held fixed. This single code path backs `grpo_loss` consistency, the
/// analytic gradient, and the finite-difference oracle.
pub fn toy_objective(
    policy: &ToyPolicy,
    old: &ToyPolicy,
    reference: &ToyPolicy,
    rollouts: &[ToyRollout],
    cfg: &GrpoConfig,
) -> Result<GrpoLossOutput, GrpoError> {
    let group = RolloutGroup {
        trajectories: rollouts
            .iter()
            .map(|r| LoggedTrajectory {
                logp_new: r.steps.iter().map(|&(s, a)| policy.logp(s, a)).collect(),
                logp_old: r.steps.iter().map(|&(s, a)| old.logp(s, a)).collect(),
                kl_to_ref: r
                    .steps
                    .iter()
                    .map(|&(s, _)| categorical_kl(&policy.probs(s), &reference.probs(s)))
                    .collect(),
                reward: r.reward,
            })
            .collect(),
    };
    grpo_loss(&group, cfg)
}

/// Exact gradient of [`toy_objective`] with respect to the policy logits.
/// Gradients are zero through tokens where the min selects a strictly clipped
/// term; the KL penalty contributes everywhere.
pub fn analytic_gradient(
    policy: &ToyPolicy,
    old: &ToyPolicy,
    reference: &ToyPolicy,
    rollouts: &[ToyRollout],
    cfg: &GrpoConfig,
) -> Result<Vec<Vec<f64>>, GrpoError> {
    let m = rollouts.len();
    if m < 2 {
        return Err(GrpoError::GroupTooSmall { got: m });
    }
    let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
    let advantages = standardized_advantages(&rewards, cfg.advantage_epsilon)?;
    let total_tokens: usize = rollouts.iter().map(|r| r.steps.len()).sum();

    let mut grad = vec![vec![0.0; policy.num_actions()]; policy.num_states()];
    for (i, rollout) in rollouts.iter().enumerate() {
        if rollout.steps.is_empty() {
            return Err(GrpoError::EmptyTrajectory { trajectory: i });
        }
        let adv = advantages[i];
        let traj_scale = 1.0 / (m as f64 * rollout.steps.len() as f64);
        for &(state, action) in &rollout.steps {
            let ratio = libm::exp(policy.logp(state, action) - old.logp(state, action));
            if !ratio.is_finite() {
                return Err(GrpoError::NonFiniteRatio { trajectory: i, token: 0 });
            }
            let unclipped = ratio * adv;
            let clipped_term = clip(ratio, cfg.clip_epsilon) * adv;
            // d ratio / d logit(state, b) = ratio * (1[b == action] - pi(b|state)).
            if unclipped <= clipped_term {
                let probs = policy.probs(state);
                for (b, p) in probs.iter().enumerate() {
                    let indicator = if b == action { 1.0 } else { 0.0 };
                    grad[state][b] += traj_scale * adv * ratio * (indicator - p);
                }
            }
            // else: strictly clipped and the clip is active, so the selected
            // term is locally constant in theta.
        }
    }

    // KL penalty: d/d logit_b of KL(pi || ref) at a state is
    // pi_b * (log(pi_b / ref_b) - KL).
    if cfg.kl_coefficient != 0.0 {
        let kl_scale = cfg.kl_coefficient / total_tokens as f64;
        for rollout in rollouts {
            for &(state, _) in &rollout.steps {
                let p = policy.probs(state);
                let q = reference.probs(state);
                let kl = categorical_kl(&p, &q);
                for b in 0..p.len() {
                    let term = p[b] * (libm::log(p[b]) - libm::log(q[b]) - kl);
                    grad[state][b] -= kl_scale * term;
                }
            }
        }
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_format: f64,
    pub mean_performance: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Outcome of a toy training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub curve: Vec<CurvePoint>,
    pub policy: ToyPolicy,
}

/// Trains the toy policy with GRPO: each step snapshots the old policy,
/// samples a group of rollouts from it, and ascends the analytic gradient.
/// The reference policy is the (uniform) initial policy, held fixed.
pub fn train_toy(
    env: &ToyRetrievalEnv,
    mut policy: ToyPolicy,
    grammar: &TagGrammar,
    cfg: &GrpoConfig,
    steps: usize,
    seed: u64,
) -> Result<TrainResult, GrpoError> {
    let reference = policy.clone();
    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let old = policy.clone();
        let mut rng = stream_rng(seed, step as u64);
        let rollouts: Vec<ToyRollout> = (0..cfg.rollouts)
            .map(|_| sample_toy_rollout(env, &old, grammar, &mut rng))
            .collect();

        let diag = toy_objective(&policy, &old, &reference, &rollouts, cfg)?;
        let grad = analytic_gradient(&policy, &old, &reference, &rollouts, cfg)?;
        for (row, grow) in policy.logits.iter_mut().zip(&grad) {
            for (l, g) in row.iter_mut().zip(grow) {
                *l += cfg.learning_rate * g;
            }
        }
        if !policy.is_finite() {
            return Err(GrpoError::DivergenceDetected { step });
        }

        let n = rollouts.len() as f64;
        curve.push(CurvePoint {
            step,
            mean_reward: rollouts.iter().map(|r| r.reward).sum::<f64>() / n,
            mean_format: rollouts.iter().map(|r| r.format).sum::<f64>() / n,
            mean_performance: rollouts.iter().map(|r| r.performance).sum::<f64>() / n,
            kl: diag.mean_kl,
            clip_fraction: diag.clip_fraction,
        });
    }
    Ok(TrainResult { curve, policy })
}
