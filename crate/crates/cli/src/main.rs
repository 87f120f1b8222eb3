//! `omnirag`: bank building, retrieval queries, episode runs, trace replay,
//! batch evaluation, toy GRPO training, and proposition simulations.
//!
//! Exit codes: 0 — command completed and every verdict passed; 1 — runtime
//! error (IO, backend, malformed input); 2 — usage error; 3 — a verdict
//! failed (sim check, replay divergence).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use omnirag::config::{load_config, write_artifact_metadata, Config};
use omnirag::eval::{build_policy, resolve_backend, run_eval, PolicySpec, ScriptedEmissions};
use omnirag::formats::{
    load_manifest, load_questions, save_checkpoint, save_curve, save_trace, trace_lines,
    Checkpoint,
};
use omnirag::replay::{replay_trace, ReplayError};
use omnirag::store::{load_bank, save_bank};
use omnirag_core::bank::{build_bank, EvidenceBank};
use omnirag_core::embed::DeterministicEmbedder;
use omnirag_core::episode::{run_episode, EpisodeConfig, DEFAULT_TEMPLATE};
use omnirag_core::grpo::{
    evaluate_policy, evaluate_scripted_optimal, score_trajectory, train_toy, GrpoConfig,
    ToyPolicy, ToyRetrievalEnv,
};
use omnirag_core::protocol::{
    format_reward, gated_reward, AnswerNorm, RewardBreakdown, TagGrammar,
};
use omnirag_core::retrieval::{embed_bank, retrieve_audio, retrieve_image};
use omnirag_core::simlab::{
    martingale_violation, sim_bayes_contraction, sim_gate_accuracy, sim_grpo_improvement,
    sim_multimodal_union, sim_scattered_vs_oneshot, BayesEnv, GateModel, SimReport,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_VERDICT: u8 = 3;

#[derive(Parser)]
#[command(name = "omnirag", version, about = "Budgeted audio-video QA engine", long_about = None)]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-pool width for fan-out commands; overrides the config file.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML config file layered under the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evidence-bank operations.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Run one retrieval query against a bank and print the evidence set.
    Query(QueryArgs),
    /// Run one episode and write its trace.
    Episode(EpisodeArgs),
    /// Re-execute a trace's retrievals and verify the recorded observations.
    Replay(ReplayArgs),
    /// Batch-evaluate a question file and write the report.
    Eval(EvalArgs),
    /// Train the toy policy with GRPO; writes the learning curve and a checkpoint.
    Train(TrainArgs),
    /// Run proposition simulations and print one verdict per check.
    Sim(SimArgs),
}

#[derive(Subcommand)]
enum BankCommand {
    /// Build (and embed) a bank directory from a manifest and an ASR file.
    Build(BankBuildArgs),
}

#[derive(Args)]
struct BankBuildArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    asr: PathBuf,
    /// Output bank directory.
    #[arg(long)]
    out: PathBuf,
    /// Frame sampling interval Δ in seconds.
    #[arg(long)]
    interval: Option<f64>,
    /// Segment length in seconds.
    #[arg(long)]
    segment_len: Option<f64>,
    /// Skip embedding; the bank stores raw items only.
    #[arg(long)]
    no_embed: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModalityArg {
    Image,
    Audio,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, value_enum)]
    modality: ModalityArg,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
}

#[derive(Args)]
struct EpisodeArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    question: String,
    /// Policy spec: scripted:<path> or chat:[url].
    #[arg(long)]
    policy: String,
    /// Trace output path (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Gold answer; when given, the terminal record carries the full reward.
    #[arg(long)]
    gold: Option<String>,
    /// Treat the gold answer as a multiple-choice letter.
    #[arg(long)]
    multiple_choice: bool,
    /// Use the training profile (k = 3, strict parsing) instead of inference.
    #[arg(long)]
    train_profile: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Question file (JSONL).
    #[arg(long)]
    questions: PathBuf,
    /// Directory holding one bank directory per video_id.
    #[arg(long)]
    bank_root: PathBuf,
    /// Policy spec: scripted:<path> or chat:[url].
    #[arg(long)]
    policy: String,
    /// Report output path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Output directory for curve.csv and checkpoint.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 8)]
    segments: usize,
    #[arg(long, default_value_t = 6)]
    budget: usize,
    /// Learning rate; defaults to the toy profile.
    #[arg(long)]
    lr: Option<f64>,
    /// Rollouts per group; defaults to the toy profile.
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long, default_value_t = 500)]
    eval_episodes: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SimCheck {
    Gate,
    Union,
    Martingale,
    Contraction,
    Scatter,
    Grpo,
    All,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum)]
    check: SimCheck,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// Gate: retrieval success rate r.
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    /// Gate: accuracy with evidence.
    #[arg(long, default_value_t = 0.8)]
    a1: f64,
    /// Gate: accuracy without evidence.
    #[arg(long, default_value_t = 0.3)]
    a0: f64,
    /// Union: image retrieval rate.
    #[arg(long, default_value_t = 0.3)]
    r_img: f64,
    /// Union: audio retrieval rate.
    #[arg(long, default_value_t = 0.4)]
    r_aud: f64,
    /// Bayes: hypothesis count M.
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Bayes: interaction turns.
    #[arg(long, default_value_t = 3)]
    turns: usize,
    /// Bayes: observation kernel noise.
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    /// GRPO improvement: training steps.
    #[arg(long, default_value_t = 400)]
    steps: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }

    let result = match cli.command {
        Command::Bank(BankCommand::Build(args)) => cmd_bank_build(args, &config),
        Command::Query(args) => cmd_query(args, &config),
        Command::Episode(args) => cmd_episode(args, &config),
        Command::Replay(args) => cmd_replay(args, &config),
        Command::Eval(args) => cmd_eval(args, &config),
        Command::Train(args) => cmd_train(args, &config),
        Command::Sim(args) => cmd_sim(args, &config),
    };
    match result {
        Ok(code) => code,
        Err(e) => fail(e),
    }
}

fn fail(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_RUNTIME)
}

fn load_bank_and_backend(
    dir: &Path,
    config: &Config,
) -> Result<(EvidenceBank, omnirag::http::AnyEmbedBackend), Box<dyn std::error::Error>> {
    let bank = load_bank(dir)?;
    let backend = resolve_backend(&bank.video_id, &bank.embed_backend_id, config)?;
    Ok((bank, backend))
}

fn cmd_bank_build(args: BankBuildArgs, config: &Config) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let manifest = load_manifest(&args.manifest)?;
    let asr = omnirag::formats::load_asr(&args.asr)?;
    let interval = args.interval.unwrap_or(config.sampling_interval_s);
    let segment_len = args.segment_len.unwrap_or(config.segment_len_s);
    let bank = build_bank(&manifest, &asr, interval, segment_len)?;
    let bank = if args.no_embed {
        bank
    } else {
        let backend = DeterministicEmbedder::with_dimension(config.seed, config.embed_dimension);
        embed_bank(bank, &backend)?
    };
    save_bank(&args.out, &bank)?;
    write_artifact_metadata(&args.out.join("meta"), config)?;
    println!(
        "bank {} written to {}: {} image items, {} audio items",
        bank.video_id,
        args.out.display(),
        bank.image_items.len(),
        bank.audio_items.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_query(args: QueryArgs, config: &Config) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (bank, backend) = load_bank_and_backend(&args.bank, config)?;
    let es = match args.modality {
        ModalityArg::Image => retrieve_image(&bank, &backend, &args.query, args.k)?,
        ModalityArg::Audio => retrieve_audio(&bank, &backend, &args.query, args.k)?,
    };
    println!("{}", serde_json::to_string_pretty(&es)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_episode(args: EpisodeArgs, config: &Config) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (bank, backend) = load_bank_and_backend(&args.bank, config)?;
    let spec = PolicySpec::parse(&args.policy)?;
    let emissions = match &spec {
        PolicySpec::Scripted(path) => Some(ScriptedEmissions::load(Path::new(path))?),
        PolicySpec::Chat(_) => None,
    };
    let mut policy = build_policy(&spec, &emissions, "episode", config)?;
    let grammar = TagGrammar::default();
    let episode_config = if args.train_profile {
        EpisodeConfig::train()
    } else {
        config.episode.clone()
    };
    let record = run_episode(
        "episode",
        &args.question,
        &bank.video_id,
        DEFAULT_TEMPLATE,
        &bank,
        &backend,
        &mut policy,
        &grammar,
        episode_config,
    )?;

    let norm = if args.multiple_choice { AnswerNorm::MultipleChoice } else { AnswerNorm::Plain };
    let reward = match &args.gold {
        Some(gold) => score_trajectory(&record, gold, &grammar, norm),
        None => {
            // No gold answer: format-only scoring, performance held at 0.
            let (fmt, matched_tags) = format_reward(&record.trajectory_text(), &grammar);
            RewardBreakdown {
                format: fmt,
                performance: 0.0,
                total: gated_reward(fmt, 0.0, grammar.gate_threshold),
                matched_tags,
            }
        }
    };
    save_trace(&args.out, &trace_lines(&record, &reward))?;
    write_artifact_metadata(&args.out, config)?;
    println!(
        "episode finished ({:?} after {} turns); answer: {}",
        record.termination,
        record.turns.len(),
        record.final_answer.as_deref().unwrap_or("")
    );
    println!("trace written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(args: ReplayArgs, config: &Config) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (bank, backend) = load_bank_and_backend(&args.bank, config)?;
    match replay_trace(&args.trace, &bank, &backend, &config.episode) {
        Ok(summary) => {
            println!(
                "PASS replay: {} turns, {} retrievals verified",
                summary.turns, summary.retrievals_checked
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ ReplayError::Divergence { .. }) => {
            println!("FAIL replay: {e}");
            Ok(ExitCode::from(EXIT_VERDICT))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_eval(args: EvalArgs, config: &Config) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let questions = load_questions(&args.questions)?;
    let spec = PolicySpec::parse(&args.policy)?;
    let report = run_eval(&questions, &args.bank_root, &spec, config, &TagGrammar::default())?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    write_artifact_metadata(&args.out, config)?;
    println!(
        "eval: {} questions, overall accuracy {:.4}",
        report.questions, report.overall_accuracy
    );
    for (category, acc) in &report.per_category_accuracy {
        println!("  {category}: {acc:.4}");
    }
    println!("report written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: TrainArgs, config: &Config) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let env = ToyRetrievalEnv::new(args.segments, args.budget);
    let mut grpo = GrpoConfig { ..GrpoConfig::toy() };
    grpo.learning_rate = args.lr.unwrap_or(grpo.learning_rate);
    grpo.rollouts = args.rollouts.unwrap_or(grpo.rollouts);
    let grammar = TagGrammar::default();
    let policy = ToyPolicy::uniform(env.num_states(), env.num_actions());
    let result = train_toy(&env, policy, &grammar, &grpo, args.steps, config.seed)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let curve_path = args.out_dir.join("curve.csv");
    save_curve(&curve_path, &result.curve)?;
    let ckpt_path = args.out_dir.join("checkpoint.json");
    save_checkpoint(
        &ckpt_path,
        &Checkpoint {
            policy: result.policy.clone(),
            env: env.clone(),
            config: grpo.clone(),
            seed: config.seed,
            steps: args.steps,
        },
    )?;
    write_artifact_metadata(&curve_path, config)?;

    let eval_seed = config.seed ^ 0x5151;
    let trained = evaluate_policy(&env, &result.policy, &grammar, args.eval_episodes, eval_seed);
    let optimal = evaluate_scripted_optimal(&env, &grammar, args.eval_episodes, eval_seed);
    println!(
        "train: {} steps; eval mean reward {:.4} (scripted optimal {:.4})",
        args.steps, trained.mean_reward, optimal.mean_reward
    );
    println!("curve written to {}, checkpoint to {}", curve_path.display(), ckpt_path.display());
    Ok(ExitCode::SUCCESS)
}

fn report_line(report: &SimReport) -> bool {
    println!(
        "{} {}: estimate {:.4}, expected {:.4} (±{:.4}, {} trials, seed {})",
        if report.pass { "PASS" } else { "FAIL" },
        report.name,
        report.estimate,
        report.expected,
        report.ci_half_width,
        report.trials,
        report.seed
    );
    report.pass
}

fn cmd_sim(args: SimArgs, config: &Config) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let seed = config.seed;
    let mut all_pass = true;
    let check = args.check;
    let run = |c: SimCheck| c == check || check == SimCheck::All;

    if run(SimCheck::Gate) {
        let model = GateModel {
            retrieval_rate: args.r,
            acc_with_evidence: args.a1,
            acc_without_evidence: args.a0,
        };
        all_pass &= report_line(&sim_gate_accuracy(&model, args.trials, seed)?);
    }
    if run(SimCheck::Union) {
        all_pass &=
            report_line(&sim_multimodal_union(args.r_img, args.r_aud, args.trials, seed)?);
    }
    if run(SimCheck::Martingale) {
        let env = BayesEnv::uniform(
            args.m,
            vec![BayesEnv::noisy_identity_kernel(args.m, args.noise); args.turns],
        );
        let violation = martingale_violation(&env)?;
        let pass = violation <= 1e-9;
        println!(
            "{} bayes_martingale: max violation {violation:.3e} (bound 1.0e-9, M={}, T={})",
            if pass { "PASS" } else { "FAIL" },
            args.m,
            args.turns
        );
        all_pass &= pass;
    }
    if run(SimCheck::Contraction) {
        let env = BayesEnv::uniform(
            args.m,
            vec![BayesEnv::noisy_identity_kernel(args.m, args.noise); args.turns],
        );
        let report = sim_bayes_contraction(&env, args.trials, seed)?;
        println!(
            "{} bayes_contraction: E[V] curve {:?}, monotone {}",
            if report.pass && report.monotone { "PASS" } else { "FAIL" },
            report
                .exact_curve
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            report.monotone
        );
        all_pass &= report.pass && report.monotone;
    }
    if run(SimCheck::Scatter) {
        let report = sim_scattered_vs_oneshot(args.trials, seed)?;
        for r in [&report.multi_turn, &report.one_shot, &report.no_retrieval] {
            report_line(r);
        }
        println!(
            "{} scatter_ordering: multi-turn > one-shot > no-retrieval",
            if report.pass { "PASS" } else { "FAIL" }
        );
        all_pass &= report.pass;
    }
    if run(SimCheck::Grpo) {
        let env = ToyRetrievalEnv::default();
        let report =
            sim_grpo_improvement(&env, &GrpoConfig::toy(), args.steps, 500, seed)?;
        println!(
            "{} grpo_improvement: trained {:.4} vs baseline {:.4} (scripted optimal {:.4}, {} steps)",
            if report.pass { "PASS" } else { "FAIL" },
            report.trained_reward,
            report.baseline_reward,
            report.scripted_optimal_reward,
            report.steps
        );
        all_pass &= report.pass;
    }

    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VERDICT) })
}
