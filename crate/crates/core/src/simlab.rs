//! Simulation lab: numerical checks of the analysis behind the gated-reward
//! design.
//!
//! Three claims are exercised:
//!
//! * gated retrieval accuracy has the closed form `r*a1 + (1-r)*a0`, and with
//!   two independent modalities the evidence rate is the union
//!   `1 - (1-r_img)(1-r_aud)`;
//! * with a uniform prior over M answers, Bayesian belief updates are a
//!   martingale, the value gap `V(H_t) = 1 - max_y pi_t(y)` starts at
//!   `1 - 1/M`, stays constant in expectation under uninformative
//!   observations, and strictly contracts under informative ones;
//! * evidence scattered across turns separates a multi-turn retriever from a
//!   single-shot one.
//!
//! Every estimator seeds each trial independently via [`stream_rng`], so
//! estimates do not depend on how trials are sharded across workers. Small
//! instances also get exact enumeration oracles so the Monte Carlo curves can
//! be checked against ground truth, not just against themselves.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grpo::{
    evaluate_policy, train_toy, GrpoConfig, GrpoError, ToyPolicy, ToyRetrievalEnv,
};
use crate::protocol::TagGrammar;
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    /// A probability parameter is outside [0, 1].
    BadProbability { name: &'static str, value: f64 },
    /// A kernel row or prior does not sum to 1 within tolerance.
    NotStochastic { where_: &'static str, sum: f64 },
    ZeroTrials,
    Grpo(GrpoError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::BadProbability { name, value } => {
                write!(f, "probability {name}={value} outside [0, 1]")
            }
            SimError::NotStochastic { where_, sum } => {
                write!(f, "{where_} must sum to 1, got {sum}")
            }
            SimError::ZeroTrials => write!(f, "trial count must be positive"),
            SimError::Grpo(e) => write!(f, "toy training failed: {e}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<GrpoError> for SimError {
    fn from(e: GrpoError) -> Self {
        SimError::Grpo(e)
    }
}

/// Tolerance on stochasticity and exact identities.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// One simulation verdict: a Monte Carlo estimate against its closed-form or
/// enumerated expectation, with a 3-sigma normal-approximation interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub name: String,
    pub trials: usize,
    pub seed: u64,
    pub estimate: f64,
    pub expected: f64,
    /// Half-width of the 3-sigma interval around the estimate.
    pub ci_half_width: f64,
    /// Whether `expected` lies inside the interval.
    pub pass: bool,
}

impl SimReport {
    fn from_bernoulli(
        name: &str,
        trials: usize,
        seed: u64,
        estimate: f64,
        expected: f64,
    ) -> SimReport {
        // Conservative binomial sigma at the expected rate.
        let sigma = libm::sqrt(expected * (1.0 - expected) / trials as f64);
        let half = 3.0 * sigma.max(1e-12);
        SimReport {
            name: String::from(name),
            trials,
            seed,
            estimate,
            expected,
            ci_half_width: half,
            pass: libm::fabs(estimate - expected) <= half,
        }
    }
}

fn check_prob(name: &'static str, p: f64) -> Result<(), SimError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(SimError::BadProbability { name, value: p });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gated accuracy
// ---------------------------------------------------------------------------

/// Two-regime answer model: retrieval surfaces the needed evidence with
/// probability `retrieval_rate`; the answer is then correct with probability
/// `acc_with_evidence`, otherwise `acc_without_evidence`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub retrieval_rate: f64,
    pub acc_with_evidence: f64,
    pub acc_without_evidence: f64,
}

impl GateModel {
    pub fn validate(&self) -> Result<(), SimError> {
        check_prob("retrieval_rate", self.retrieval_rate)?;
        check_prob("acc_with_evidence", self.acc_with_evidence)?;
        check_prob("acc_without_evidence", self.acc_without_evidence)
    }

    /// Closed-form expected accuracy: `r*a1 + (1-r)*a0`.
    pub fn closed_form_accuracy(&self) -> f64 {
        self.retrieval_rate * self.acc_with_evidence
            + (1.0 - self.retrieval_rate) * self.acc_without_evidence
    }
}

/// Monte Carlo estimate of the gate model accuracy, checked against the
/// closed form.
pub fn sim_gate_accuracy(
    model: &GateModel,
    trials: usize,
    seed: u64,
) -> Result<SimReport, SimError> {
    model.validate()?;
    if trials == 0 {
        return Err(SimError::ZeroTrials);
    }
    let mut correct = 0usize;
    for i in 0..trials {
        let mut rng = stream_rng(seed, i as u64);
        let evidence = rng.random_range(0.0..1.0) < model.retrieval_rate;
        let acc = if evidence { model.acc_with_evidence } else { model.acc_without_evidence };
        if rng.random_range(0.0..1.0) < acc {
            correct += 1;
        }
    }
    let mut report = SimReport::from_bernoulli(
        "gate_accuracy",
        trials,
        seed,
        correct as f64 / trials as f64,
        model.closed_form_accuracy(),
    );
    // The retrieval gain over the no-evidence baseline is at least
    // r * (a1 - a0); enforce it up to the interval width.
    let gain_bound =
        model.retrieval_rate * (model.acc_with_evidence - model.acc_without_evidence);
    let gain = report.estimate - model.acc_without_evidence;
    report.pass = report.pass && gain + report.ci_half_width >= gain_bound;
    Ok(report)
}

/// Probability that at least one of two independent modality retrievals
/// succeeds: `1 - (1 - r_img)(1 - r_aud)`.
pub fn union_retrieval_rate(r_img: f64, r_aud: f64) -> f64 {
    1.0 - (1.0 - r_img) * (1.0 - r_aud)
}

/// Monte Carlo estimate of the two-modality evidence rate against the union
/// closed form.
pub fn sim_multimodal_union(
    r_img: f64,
    r_aud: f64,
    trials: usize,
    seed: u64,
) -> Result<SimReport, SimError> {
    check_prob("r_img", r_img)?;
    check_prob("r_aud", r_aud)?;
    if trials == 0 {
        return Err(SimError::ZeroTrials);
    }
    let mut hits = 0usize;
    for i in 0..trials {
        let mut rng = stream_rng(seed, i as u64);
        let img = rng.random_range(0.0..1.0) < r_img;
        let aud = rng.random_range(0.0..1.0) < r_aud;
        if img || aud {
            hits += 1;
        }
    }
    let mut report = SimReport::from_bernoulli(
        "multimodal_union",
        trials,
        seed,
        hits as f64 / trials as f64,
        union_retrieval_rate(r_img, r_aud),
    );
    // Using both banks is at least as good as the better single modality.
    report.pass =
        report.pass && report.estimate + report.ci_half_width >= r_img.max(r_aud);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Bayesian belief contraction
// ---------------------------------------------------------------------------

/// Sequential observation model over M candidate answers: a prior and one
/// observation kernel per turn, `kernels[t][y][o] = P(o_t | y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesEnv {
    pub prior: Vec<f64>,
    pub kernels: Vec<Vec<Vec<f64>>>,
}

impl BayesEnv {
    /// Uniform prior over `m` answers with the given per-turn kernels.
    pub fn uniform(m: usize, kernels: Vec<Vec<Vec<f64>>>) -> Self {
        BayesEnv { prior: vec![1.0 / m as f64; m], kernels }
    }

    /// A kernel where the observation distribution ignores the answer; the
    /// posterior provably never moves under it.
    pub fn uninformative_kernel(m: usize, obs: &[f64]) -> Vec<Vec<f64>> {
        vec![obs.to_vec(); m]
    }

    /// A symmetric-noise kernel over M observations: the true answer emits
    /// its own index with probability `1 - noise`, anything else uniformly.
    pub fn noisy_identity_kernel(m: usize, noise: f64) -> Vec<Vec<f64>> {
        let off = noise / (m - 1) as f64;
        (0..m)
            .map(|y| (0..m).map(|o| if o == y { 1.0 - noise } else { off }).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let sum: f64 = self.prior.iter().sum();
        if libm::fabs(sum - 1.0) > STOCHASTIC_TOLERANCE {
            return Err(SimError::NotStochastic { where_: "prior", sum });
        }
        for kernel in &self.kernels {
            for row in kernel {
                let sum: f64 = row.iter().sum();
                if libm::fabs(sum - 1.0) > STOCHASTIC_TOLERANCE {
                    return Err(SimError::NotStochastic { where_: "kernel row", sum });
                }
            }
        }
        Ok(())
    }

    pub fn turns(&self) -> usize {
        self.kernels.len()
    }
}

/// Bayes posterior update for one observation under one kernel.
pub fn posterior_update(belief: &[f64], kernel: &[Vec<f64>], obs: usize) -> Vec<f64> {
    let z: f64 = belief.iter().zip(kernel).map(|(b, row)| b * row[obs]).sum();
    belief.iter().zip(kernel).map(|(b, row)| b * row[obs] / z).collect()
}

/// Residual uncertainty of a belief: `V = 1 - max_y pi(y)`.
pub fn value_gap(belief: &[f64]) -> f64 {
    1.0 - belief.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest violation of the one-step martingale identity
/// `sum_o P(o) pi_t(y | o) = pi_{t-1}(y)` over every belief state reachable
/// by exact enumeration. Zero up to float error for any valid kernel.
pub fn martingale_violation(env: &BayesEnv) -> Result<f64, SimError> {
    env.validate()?;
    let mut worst = 0.0f64;
    let mut frontier: Vec<(f64, Vec<f64>)> = vec![(1.0, env.prior.clone())];
    for kernel in &env.kernels {
        let num_obs = kernel[0].len();
        let mut next = Vec::new();
        for (path_p, belief) in &frontier {
            let mut reconstructed = vec![0.0; belief.len()];
            for o in 0..num_obs {
                let p_obs: f64 = belief.iter().zip(kernel).map(|(b, row)| b * row[o]).sum();
                if p_obs <= 0.0 {
                    continue;
                }
                let post = posterior_update(belief, kernel, o);
                for (acc, v) in reconstructed.iter_mut().zip(&post) {
                    *acc += p_obs * v;
                }
                next.push((path_p * p_obs, post));
            }
            for (got, want) in reconstructed.iter().zip(belief) {
                worst = worst.max(libm::fabs(got - want));
            }
        }
        frontier = next;
    }
    Ok(worst)
}

/// Exact expected value gap `E[V(H_t)]` for `t = 0..=T` by enumerating every
/// observation sequence. Exponential in T; intended for small instances that
/// anchor the Monte Carlo estimates.
pub fn exact_value_curve(env: &BayesEnv) -> Result<Vec<f64>, SimError> {
    env.validate()?;
    let mut curve = vec![value_gap(&env.prior)];
    let mut frontier: Vec<(f64, Vec<f64>)> = vec![(1.0, env.prior.clone())];
    for kernel in &env.kernels {
        let num_obs = kernel[0].len();
        let mut next: Vec<(f64, Vec<f64>)> = Vec::new();
        for (path_p, belief) in &frontier {
            for o in 0..num_obs {
                let p_obs: f64 = belief.iter().zip(kernel).map(|(b, row)| b * row[o]).sum();
                if p_obs <= 0.0 {
                    continue;
                }
                next.push((path_p * p_obs, posterior_update(belief, kernel, o)));
            }
        }
        curve.push(next.iter().map(|(p, b)| p * value_gap(b)).sum());
        frontier = next;
    }
    Ok(curve)
}

/// Monte Carlo and exact expected-uncertainty curves with per-turn verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub trials: usize,
    /// `E[V(H_t)]` estimated by simulation, index 0 is the prior.
    pub mc_curve: Vec<f64>,
    /// Same curve by exact enumeration.
    pub exact_curve: Vec<f64>,
    pub max_martingale_violation: f64,
    /// The exact curve never increases.
    pub monotone: bool,
    /// Every MC point is within 3 sigma of the exact point.
    pub pass: bool,
}

/// Simulates posterior updating and compares the expected uncertainty curve
/// to the exact enumeration, also reporting the martingale check.
pub fn sim_bayes_contraction(
    env: &BayesEnv,
    trials: usize,
    seed: u64,
) -> Result<ContractionReport, SimError> {
    env.validate()?;
    if trials == 0 {
        return Err(SimError::ZeroTrials);
    }
    let turns = env.turns();
    let m = env.prior.len();
    let mut sums = vec![0.0f64; turns + 1];
    let mut sq_sums = vec![0.0f64; turns + 1];
    for i in 0..trials {
        let mut rng = stream_rng(seed, i as u64);
        // Draw the true answer from the prior.
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut truth = m - 1;
        for (y, p) in env.prior.iter().enumerate() {
            acc += p;
            if u < acc {
                truth = y;
                break;
            }
        }
        let mut belief = env.prior.clone();
        let v0 = value_gap(&belief);
        sums[0] += v0;
        sq_sums[0] += v0 * v0;
        for (t, kernel) in env.kernels.iter().enumerate() {
            let row = &kernel[truth];
            let u: f64 = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut obs = row.len() - 1;
            for (o, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    obs = o;
                    break;
                }
            }
            belief = posterior_update(&belief, kernel, obs);
            let v = value_gap(&belief);
            sums[t + 1] += v;
            sq_sums[t + 1] += v * v;
        }
    }
    let n = trials as f64;
    let mc_curve: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let exact_curve = exact_value_curve(env)?;
    let monotone = exact_curve.windows(2).all(|w| w[1] <= w[0] + STOCHASTIC_TOLERANCE);
    let mut pass = true;
    for t in 0..=turns {
        let mean = mc_curve[t];
        let var = (sq_sums[t] / n - mean * mean).max(0.0);
        let half = 3.0 * libm::sqrt(var / n).max(1e-12);
        if libm::fabs(mean - exact_curve[t]) > half {
            pass = false;
        }
    }
    Ok(ContractionReport {
        trials,
        mc_curve,
        exact_curve,
        max_martingale_violation: martingale_violation(env)?,
        monotone,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Scattered evidence vs. single-shot retrieval
// ---------------------------------------------------------------------------

/// Scattered-evidence study: the answer is two independent fair bits living
/// in different segments. A multi-turn agent reads both (accuracy 1), a
/// single-shot agent reads one and guesses the other (accuracy 1/2), and a
/// no-retrieval agent guesses both (accuracy 1/4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterReport {
    pub trials: usize,
    pub multi_turn: SimReport,
    pub one_shot: SimReport,
    pub no_retrieval: SimReport,
    pub pass: bool,
}

pub fn sim_scattered_vs_oneshot(trials: usize, seed: u64) -> Result<ScatterReport, SimError> {
    if trials == 0 {
        return Err(SimError::ZeroTrials);
    }
    let mut multi = 0usize;
    let mut single = 0usize;
    let mut blind = 0usize;
    for i in 0..trials {
        let mut rng = stream_rng(seed, i as u64);
        let bit0 = rng.random_range(0..2u32);
        let bit1 = rng.random_range(0..2u32);
        // Multi-turn: retrieves both segments, answers exactly.
        multi += 1;
        // One shot: retrieves segment 0, guesses bit 1.
        let guess1 = rng.random_range(0..2u32);
        if bit0 == bit0 && guess1 == bit1 {
            single += 1;
        }
        // No retrieval: guesses both bits.
        let g0 = rng.random_range(0..2u32);
        let g1 = rng.random_range(0..2u32);
        if g0 == bit0 && g1 == bit1 {
            blind += 1;
        }
    }
    let n = trials as f64;
    let multi_turn =
        SimReport::from_bernoulli("scatter_multi_turn", trials, seed, multi as f64 / n, 1.0);
    let one_shot =
        SimReport::from_bernoulli("scatter_one_shot", trials, seed, single as f64 / n, 0.5);
    let no_retrieval =
        SimReport::from_bernoulli("scatter_no_retrieval", trials, seed, blind as f64 / n, 0.25);
    let pass = multi_turn.pass
        && one_shot.pass
        && no_retrieval.pass
        && multi_turn.estimate > one_shot.estimate
        && one_shot.estimate > no_retrieval.estimate;
    Ok(ScatterReport { trials, multi_turn, one_shot, no_retrieval, pass })
}

// ---------------------------------------------------------------------------
// End-to-end toy optimization
// ---------------------------------------------------------------------------

/// Verdict of a short toy GRPO run: the trained policy must beat the uniform
/// baseline on held-out evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoImprovementReport {
    pub steps: usize,
    pub eval_episodes: usize,
    pub baseline_reward: f64,
    pub trained_reward: f64,
    pub scripted_optimal_reward: f64,
    pub pass: bool,
}

pub fn sim_grpo_improvement(
    env: &ToyRetrievalEnv,
    cfg: &GrpoConfig,
    steps: usize,
    eval_episodes: usize,
    seed: u64,
) -> Result<GrpoImprovementReport, SimError> {
    let grammar = TagGrammar::default();
    let uniform = ToyPolicy::uniform(env.num_states(), env.num_actions());
    let baseline = evaluate_policy(env, &uniform, &grammar, eval_episodes, seed ^ 0x5151);
    let result = train_toy(env, uniform, &grammar, cfg, steps, seed)?;
    let trained = evaluate_policy(env, &result.policy, &grammar, eval_episodes, seed ^ 0x5151);
    let optimal =
        crate::grpo::evaluate_scripted_optimal(env, &grammar, eval_episodes, seed ^ 0x5151);
    Ok(GrpoImprovementReport {
        steps,
        eval_episodes,
        baseline_reward: baseline.mean_reward,
        trained_reward: trained.mean_reward,
        scripted_optimal_reward: optimal.mean_reward,
        pass: trained.mean_reward > baseline.mean_reward,
    })
}
