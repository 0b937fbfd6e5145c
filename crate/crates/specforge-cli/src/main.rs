//! Batch command surface for the refinement pipeline: `synth` runs the
//! engine over a problem bundle, `distill` turns a finished trajectory store
//! into SFT shards, `stats` reports dataset composition, and `replay`
//! re-verifies the verdicts a store claims.
//!
//! Exit codes: 0 on success, 1 when a run produced an error outcome (or a
//! replay mismatch), 2 on configuration problems, 130 on interrupt.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use specforge::distill::{
    apply_variant, dataset_stats, distill_checkpoints, load_dataset, shares_ngram, write_shards,
    Variant, DEFAULT_NGRAM,
};
use specforge::engine::{
    Clock, Engine, EngineConfig, LogicalClock, SeedTest, SynthesisRun, SystemClock,
};
use specforge::gateway::{
    CompletionBackend, Gateway, RemoteBackend, RemoteConfig, ScriptedBackend,
};
use specforge::model::{Checkpoint, Dialect, Outcome, Problem, Trajectory, VerdictTag};
use specforge::oracle::OracleRegistry;
use specforge::prover::{
    instantiate_proposition, LeanBackend, LeanBackendConfig, MiniBackend, ProverBackend,
    ProverError,
};
use specforge::store::{self, TrajectoryStore};

const EXIT_OK: i32 = 0;
const EXIT_RUN_FAILURE: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_INTERRUPTED: i32 = 130;

// ─────────────────────────── Argument surface ───────────────────────────

/// Specification synthesis through traceable refinement.
#[derive(Parser)]
#[command(name = "specforge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize specifications for every problem in a bundle.
    Synth(SynthArgs),
    /// Distill a trajectory store into SFT dataset shards.
    Distill(DistillArgs),
    /// Print composition statistics for dataset shards.
    Stats(StatsArgs),
    /// Re-verify the prover verdicts recorded in a store.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Problem bundle: JSON `{"problems": [{id, description, signature,
    /// oracle_ref, seed_tests?}]}`.
    #[arg(long, value_name = "FILE")]
    bundle: PathBuf,
    /// Output directory; receives trajectories.jsonl and manifest.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Completion backend.
    #[arg(long, value_enum, default_value_t = BackendChoice::Scripted)]
    backend: BackendChoice,
    /// Proposition checker.
    #[arg(long, value_enum, default_value_t = ProverChoice::Mini)]
    prover: ProverChoice,
    /// Scripted replies: JSONL of {task, ordinal, response_text}.
    #[arg(long, value_name = "FILE")]
    script: Option<PathBuf>,
    /// Refinement budget per problem (default 25, or 10 in dataset mode).
    #[arg(long, value_name = "N")]
    max_iterations: Option<u32>,
    /// Test-suite size cap per problem.
    #[arg(long, value_name = "N", default_value_t = specforge::engine::DEFAULT_MAX_TESTS)]
    max_tests: usize,
    /// Worker threads; scripted runs always use one.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,
    /// Dataset-construction profile: shorter budget, seed tests honored.
    #[arg(long)]
    dataset_mode: bool,
    /// Remote backend: completions endpoint URL.
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Remote backend: model identifier.
    #[arg(long, value_name = "ID")]
    model: Option<String>,
    /// Remote backend: environment variable holding the API token.
    #[arg(long, value_name = "VAR", default_value = "SPECFORGE_API_KEY")]
    auth_env: String,
    /// External prover argv (whitespace-split); the theorem file path is
    /// appended as the final argument.
    #[arg(long, value_name = "CMD")]
    prover_cmd: Option<String>,
    /// External prover timeout in seconds.
    #[arg(long, value_name = "SECS", default_value_t = 120)]
    prover_timeout: u64,
}

#[derive(Args)]
struct DistillArgs {
    /// Trajectory store to distill.
    #[arg(long, value_name = "FILE")]
    store: PathBuf,
    /// Output directory; receives shard files and stats.txt.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Task subset to keep.
    #[arg(long, value_enum, default_value_t = VariantChoice::Full)]
    variant: VariantChoice,
    /// Benchmark texts (JSON array of strings); problems sharing a 10-gram
    /// with any of them are dropped.
    #[arg(long, value_name = "FILE")]
    benchmark: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Dataset shard files, or directories containing .jsonl shards.
    #[arg(value_name = "PATH", required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trajectory store to re-verify.
    #[arg(long, value_name = "FILE")]
    store: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendChoice {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProverChoice {
    Mini,
    Lean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantChoice {
    Full,
    NoTest,
    SpecOnly,
}

impl From<VariantChoice> for Variant {
    fn from(choice: VariantChoice) -> Variant {
        match choice {
            VariantChoice::Full => Variant::Full,
            VariantChoice::NoTest => Variant::NoTest,
            VariantChoice::SpecOnly => Variant::SpecOnly,
        }
    }
}

// ─────────────────────────── Error plumbing ───────────────────────────

/// A command failure carrying the exit code it maps to.
struct CliError {
    code: i32,
    source: anyhow::Error,
}

impl CliError {
    fn config(source: impl Into<anyhow::Error>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            source: source.into(),
        }
    }

    fn runtime(source: impl Into<anyhow::Error>) -> Self {
        CliError {
            code: EXIT_RUN_FAILURE,
            source: source.into(),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Distill(args) => cmd_distill(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Replay(args) => cmd_replay(args),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {:#}", err.source);
            err.code
        }
    };
    std::process::exit(code);
}

// ─────────────────────────── synth ───────────────────────────

#[derive(Deserialize)]
struct Bundle {
    problems: Vec<BundleProblem>,
}

/// One bundle entry: the problem plus optional pre-labeled positive tests
/// (used in dataset mode).
#[derive(Deserialize)]
struct BundleProblem {
    #[serde(flatten)]
    problem: Problem,
    #[serde(default)]
    seed_tests: Vec<SeedTest>,
}

/// One problem's row in the run manifest.
#[derive(Debug, Clone, Serialize)]
struct ManifestEntry {
    problem_id: String,
    outcome: Outcome,
    /// Repair iterations consumed.
    iterations: usize,
    suite_size: usize,
    wall_time_secs: f64,
    final_unverified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl ManifestEntry {
    fn from_run(run: &SynthesisRun, wall_time: Duration) -> Self {
        ManifestEntry {
            problem_id: run.trajectory.problem.id.clone(),
            outcome: run.trajectory.outcome,
            iterations: run.trajectory.spec_attempts.len(),
            suite_size: run.trajectory.suite.len(),
            wall_time_secs: wall_time.as_secs_f64(),
            final_unverified: run.trajectory.final_unverified,
            error: run.error.clone(),
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    problems: Vec<ManifestEntry>,
}

fn load_bundle(path: &Path) -> anyhow::Result<Vec<BundleProblem>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read bundle {}", path.display()))?;
    let bundle: Bundle = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse bundle {}", path.display()))?;
    if bundle.problems.is_empty() {
        bail!("bundle {} contains no problems", path.display());
    }
    let mut seen = BTreeSet::new();
    for entry in &bundle.problems {
        entry
            .problem
            .validate()
            .with_context(|| format!("invalid problem {:?}", entry.problem.id))?;
        if !seen.insert(entry.problem.id.clone()) {
            bail!("duplicate problem id {:?} in bundle", entry.problem.id);
        }
    }
    Ok(bundle.problems)
}

fn write_manifest(path: &Path, entries: &[(usize, ManifestEntry)]) -> anyhow::Result<()> {
    let mut sorted: Vec<&(usize, ManifestEntry)> = entries.iter().collect();
    sorted.sort_by_key(|(index, _)| *index);
    let manifest = Manifest {
        problems: sorted.into_iter().map(|(_, e)| e.clone()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn build_backend(
    args: &SynthArgs,
) -> Result<(Arc<dyn CompletionBackend>, Arc<dyn Clock>, usize), CliError> {
    match args.backend {
        BackendChoice::Scripted => {
            let script = args.script.as_deref().ok_or_else(|| {
                CliError::config(anyhow!("--backend scripted requires --script"))
            })?;
            let backend = ScriptedBackend::from_path(script).map_err(CliError::config)?;
            if args.workers > 1 {
                eprintln!(
                    "note: scripted replies are consumed in order; running with 1 worker instead of {}",
                    args.workers
                );
            }
            Ok((Arc::new(backend), Arc::new(LogicalClock::default()), 1))
        }
        BackendChoice::Remote => {
            let endpoint = args
                .endpoint
                .clone()
                .ok_or_else(|| CliError::config(anyhow!("--backend remote requires --endpoint")))?;
            let model_id = args
                .model
                .clone()
                .ok_or_else(|| CliError::config(anyhow!("--backend remote requires --model")))?;
            let backend = RemoteBackend::new(RemoteConfig {
                endpoint,
                model_id,
                auth_env: Some(args.auth_env.clone()),
                ..RemoteConfig::default()
            })
            .map_err(CliError::config)?;
            Ok((Arc::new(backend), Arc::new(SystemClock), args.workers))
        }
    }
}

fn build_prover(args: &SynthArgs, workers: usize) -> Result<Arc<dyn ProverBackend>, CliError> {
    match args.prover {
        ProverChoice::Mini => Ok(Arc::new(MiniBackend::new())),
        ProverChoice::Lean => {
            let command = args.prover_cmd.as_deref().ok_or_else(|| {
                CliError::config(anyhow!("--prover lean requires --prover-cmd"))
            })?;
            let argv: Vec<String> = command.split_whitespace().map(str::to_owned).collect();
            if argv.is_empty() {
                return Err(CliError::config(anyhow!("--prover-cmd is empty")));
            }
            let scratch = args.out.join("prover-scratch");
            fs::create_dir_all(&scratch)
                .with_context(|| format!("cannot create {}", scratch.display()))
                .map_err(CliError::config)?;
            let mut config = LeanBackendConfig::new(argv, scratch);
            config.timeout = Duration::from_secs(args.prover_timeout);
            config.pool_size = workers;
            Ok(Arc::new(LeanBackend::new(config)))
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<i32, CliError> {
    let bundle = load_bundle(&args.bundle).map_err(CliError::config)?;
    if args.workers == 0 {
        return Err(CliError::config(anyhow!("--workers must be at least 1")));
    }

    let mut config = if args.dataset_mode {
        EngineConfig::dataset()
    } else {
        EngineConfig::default()
    };
    if let Some(n) = args.max_iterations {
        config.max_iterations = n;
    }
    config.max_tests_per_problem = args.max_tests;
    config.dialect = match args.prover {
        ProverChoice::Mini => Dialect::Mini,
        ProverChoice::Lean => Dialect::Lean,
    };
    config.validate().map_err(CliError::config)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .map_err(CliError::config)?;
    let (backend, clock, workers) = build_backend(&args)?;
    let prover = build_prover(&args, workers)?;

    let store_path = args.out.join("trajectories.jsonl");
    let manifest_path = args.out.join("manifest.json");
    let store = TrajectoryStore::create(&store_path).map_err(CliError::config)?;
    let engine = Engine::new(
        Gateway::new(backend, config.completion.clone()),
        prover,
        Arc::new(OracleRegistry::with_builtins()),
        config,
        clock,
    );

    let queue: Mutex<VecDeque<(usize, BundleProblem)>> =
        Mutex::new(bundle.into_iter().enumerate().collect());
    let results: Arc<Mutex<Vec<(usize, ManifestEntry)>>> = Arc::new(Mutex::new(Vec::new()));
    let stop = Arc::new(AtomicBool::new(false));
    let interrupted = Arc::new(AtomicBool::new(false));
    let fatal: Mutex<Option<String>> = Mutex::new(None);

    install_interrupt_handler(&stop, &interrupted, &results, &manifest_path);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Some((index, entry)) = queue.lock().expect("queue lock").pop_front() else {
                    break;
                };
                let started = Instant::now();
                match engine.synthesize(&entry.problem, &entry.seed_tests, &store) {
                    Ok(run) => {
                        let row = ManifestEntry::from_run(&run, started.elapsed());
                        eprintln!(
                            "{}: {} ({} repairs, {} tests, {:.2}s){}",
                            row.problem_id,
                            outcome_label(row.outcome),
                            row.iterations,
                            row.suite_size,
                            row.wall_time_secs,
                            row.error
                                .as_deref()
                                .map(|e| format!(" — {e}"))
                                .unwrap_or_default(),
                        );
                        results.lock().expect("results lock").push((index, row));
                    }
                    Err(err) => {
                        let mut slot = fatal.lock().expect("fatal lock");
                        if slot.is_none() {
                            *slot = Some(format!(
                                "store failure on problem {:?}: {err}",
                                entry.problem.id
                            ));
                        }
                        stop.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            });
        }
    });

    let entries = results.lock().expect("results lock").clone();
    write_manifest(&manifest_path, &entries).map_err(CliError::runtime)?;

    let count = |outcome: Outcome| {
        entries
            .iter()
            .filter(|(_, e)| e.outcome == outcome)
            .count()
    };
    println!(
        "{} problems: {} converged, {} budget_exhausted, {} error",
        entries.len(),
        count(Outcome::Converged),
        count(Outcome::BudgetExhausted),
        count(Outcome::Error),
    );
    println!("store: {}", store_path.display());
    println!("manifest: {}", manifest_path.display());

    if let Some(detail) = fatal.lock().expect("fatal lock").take() {
        return Err(CliError::runtime(anyhow!(detail)));
    }
    if interrupted.load(Ordering::SeqCst) {
        return Ok(EXIT_INTERRUPTED);
    }
    if entries.iter().any(|(_, e)| e.outcome == Outcome::Error) {
        return Ok(EXIT_RUN_FAILURE);
    }
    Ok(EXIT_OK)
}

/// First interrupt: stop dispatching and let in-flight problems finish (the
/// store is synced per append). Second interrupt: write the partial manifest
/// and exit immediately.
fn install_interrupt_handler(
    stop: &Arc<AtomicBool>,
    interrupted: &Arc<AtomicBool>,
    results: &Arc<Mutex<Vec<(usize, ManifestEntry)>>>,
    manifest_path: &Path,
) {
    let stop = Arc::clone(stop);
    let interrupted = Arc::clone(interrupted);
    let results = Arc::clone(results);
    let manifest_path = manifest_path.to_owned();
    let presses = AtomicUsize::new(0);
    let outcome = ctrlc::set_handler(move || {
        if presses.fetch_add(1, Ordering::SeqCst) == 0 {
            interrupted.store(true, Ordering::SeqCst);
            stop.store(true, Ordering::SeqCst);
            eprintln!("interrupt: finishing in-flight problems (press again to abort)");
        } else {
            let entries = results.lock().expect("results lock").clone();
            let _ = write_manifest(&manifest_path, &entries);
            std::process::exit(EXIT_INTERRUPTED);
        }
    });
    if let Err(err) = outcome {
        eprintln!("note: interrupt handler unavailable: {err}");
    }
}

fn outcome_label(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Converged => "converged",
        Outcome::BudgetExhausted => "budget_exhausted",
        Outcome::Error => "error",
    }
}

// ─────────────────────────── distill ───────────────────────────

fn load_benchmark(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read benchmark {}", path.display()))?;
    let texts: Vec<String> = serde_json::from_str(&text)
        .with_context(|| format!("benchmark {} must be a JSON array of strings", path.display()))?;
    Ok(texts)
}

/// Drops every checkpoint belonging to a problem whose description shares an
/// n-gram with the benchmark; returns the dropped problem ids.
fn drop_contaminated(
    checkpoints: Vec<Checkpoint>,
    benchmark_texts: &[String],
) -> (Vec<Checkpoint>, Vec<String>) {
    if benchmark_texts.is_empty() {
        return (checkpoints, Vec::new());
    }
    let mut dropped = BTreeSet::new();
    for checkpoint in &checkpoints {
        if !dropped.contains(&checkpoint.problem_id)
            && shares_ngram(&checkpoint.problem_description, benchmark_texts, DEFAULT_NGRAM)
        {
            dropped.insert(checkpoint.problem_id.clone());
        }
    }
    let kept = checkpoints
        .into_iter()
        .filter(|c| !dropped.contains(&c.problem_id))
        .collect();
    (kept, dropped.into_iter().collect())
}

fn cmd_distill(args: DistillArgs) -> Result<i32, CliError> {
    let (checkpoints, skipped) =
        store::iterate_checkpoints(&args.store).map_err(CliError::config)?;
    let benchmark_texts = match &args.benchmark {
        Some(path) => load_benchmark(path).map_err(CliError::config)?,
        None => Vec::new(),
    };
    let (checkpoints, dropped) = drop_contaminated(checkpoints, &benchmark_texts);
    let variant = Variant::from(args.variant);
    let examples = distill_checkpoints(&checkpoints).map_err(CliError::runtime)?;
    let examples = apply_variant(examples, variant);

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .map_err(CliError::config)?;
    let stem = format!("sft-{}", variant.label());
    let shards = write_shards(&examples, &args.out, &stem).map_err(CliError::runtime)?;

    let mut report = dataset_stats(&examples).to_string();
    report.push('\n');
    report.push_str(&format!("variant: {}\n", variant.label()));
    report.push_str(&format!("store records skipped: {skipped}\n"));
    if dropped.is_empty() {
        report.push_str("problems dropped by decontamination: 0\n");
    } else {
        report.push_str(&format!(
            "problems dropped by decontamination: {} ({})\n",
            dropped.len(),
            dropped.join(", ")
        ));
    }
    for shard in &shards {
        report.push_str(&format!("shard: {}\n", shard.display()));
    }
    fs::write(args.out.join("stats.txt"), &report)
        .with_context(|| format!("cannot write {}", args.out.join("stats.txt").display()))
        .map_err(CliError::runtime)?;
    print!("{report}");
    Ok(EXIT_OK)
}

// ─────────────────────────── stats ───────────────────────────

fn expand_dataset_path(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_owned()]);
    }
    if path.is_dir() {
        let mut shards: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("cannot read {}", path.display()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
            .collect();
        shards.sort();
        if shards.is_empty() {
            bail!("{} contains no .jsonl shards", path.display());
        }
        return Ok(shards);
    }
    bail!("no such path {}", path.display());
}

fn cmd_stats(args: StatsArgs) -> Result<i32, CliError> {
    let mut examples = Vec::new();
    for path in &args.paths {
        for shard in expand_dataset_path(path).map_err(CliError::config)? {
            examples.extend(load_dataset(&shard).map_err(CliError::config)?);
        }
    }
    print!("{}", dataset_stats(&examples));
    Ok(EXIT_OK)
}

// ─────────────────────────── replay ───────────────────────────

enum ReplayOutcome {
    Verified { tests: usize },
    Skipped { reason: String },
    Mismatched { diffs: Vec<String> },
}

/// Re-runs the decidable prover over the last evaluated candidate and
/// compares each verdict with the recorded one. Judge-routed rows must still
/// come back undecidable; ill-typed propositions count as undecidable, the
/// same way the engine routes them.
fn replay_trajectory(trajectory: &Trajectory) -> anyhow::Result<ReplayOutcome> {
    let Some(step) = trajectory.steps.last() else {
        return Ok(ReplayOutcome::Skipped {
            reason: "no evaluation recorded".to_owned(),
        });
    };
    if step.spec.dialect != Dialect::Mini {
        return Ok(ReplayOutcome::Skipped {
            reason: "spec dialect is not replayable".to_owned(),
        });
    }
    let tests: BTreeMap<&str, &specforge::model::TestCase> = trajectory
        .suite
        .iter()
        .map(|t| (t.id.as_str(), t))
        .collect();
    let prover = MiniBackend::new();
    let signature = &trajectory.problem.signature;
    let mut diffs = Vec::new();
    let mut verified = 0usize;
    for (test_id, result) in step.report.iter() {
        let Some(test) = tests.get(test_id.as_str()) else {
            diffs.push(format!("{test_id}: not present in the stored suite"));
            continue;
        };
        let replayed = match instantiate_proposition(&step.spec, test, signature) {
            Ok(prop) => prover.decide(&prop)?.tag,
            Err(ProverError::IllTyped { .. }) => VerdictTag::Unknown,
            Err(err) => return Err(err.into()),
        };
        if replayed == result.verdict {
            verified += 1;
        } else {
            diffs.push(format!(
                "{test_id}: recorded {}, replayed {}",
                result.verdict.result_status(),
                replayed.result_status(),
            ));
        }
    }
    if diffs.is_empty() {
        Ok(ReplayOutcome::Verified { tests: verified })
    } else {
        Ok(ReplayOutcome::Mismatched { diffs })
    }
}

fn cmd_replay(args: ReplayArgs) -> Result<i32, CliError> {
    let ids = store::problem_ids(&args.store).map_err(CliError::config)?;
    if ids.is_empty() {
        return Err(CliError::config(anyhow!(
            "store {} contains no records",
            args.store.display()
        )));
    }
    let mut mismatched = 0usize;
    for id in &ids {
        let trajectory = store::load_trajectory(&args.store, id).map_err(CliError::config)?;
        match replay_trajectory(&trajectory).map_err(CliError::runtime)? {
            ReplayOutcome::Verified { tests } => {
                println!("{id}: {tests} verdicts match");
            }
            ReplayOutcome::Skipped { reason } => {
                println!("{id}: skipped ({reason})");
            }
            ReplayOutcome::Mismatched { diffs } => {
                mismatched += 1;
                println!("{id}: {} verdict(s) diverge", diffs.len());
                for diff in diffs {
                    println!("  {diff}");
                }
            }
        }
    }
    Ok(if mismatched > 0 {
        EXIT_RUN_FAILURE
    } else {
        EXIT_OK
    })
}
