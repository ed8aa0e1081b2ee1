use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use autogda::corpus::{emit_dataset, ingest_targets, read_dataset, write_jsonl, CorpusError, LabeledExample};
use autogda::gateway::{DiskCache, MemoryCache, ResponseCache, Role};
use autogda::pipeline::{
    run, score_examples, EvidenceState, EvidenceStatus, PipelineError, RunConfig, RunOptions, RunReport,
    SelectionStrategy,
};
use autogda::simlab::{run_experiment, ExperimentError, ExperimentParams, ExperimentSummary, SimParams};
use autogda::{Gateway, GatewayError, Weights};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("upstream error: {0}")]
    Upstream(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Upstream(_) => 3,
            CliError::Parse(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Cache(_) => CliError::Io(e.to_string()),
            GatewayError::Request(_) | GatewayError::Unconfigured(_) => CliError::Config(e.to_string()),
            _ => CliError::Upstream(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            PipelineError::Corpus(c) => c.into(),
            PipelineError::Checkpoint { .. } => CliError::Io(e.to_string()),
            PipelineError::UnknownEvidence(_) => CliError::Parse(e.to_string()),
            PipelineError::Gateway(g) => g.into(),
            PipelineError::Evidence { .. } | PipelineError::AllFailed { .. } => CliError::Upstream(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sim(s) => CliError::Config(s.to_string()),
            ExperimentError::Pipeline(p) => p.into(),
        }
    }
}

/// Synthetic training data for grounding verifiers in a target domain.
#[derive(Debug, Parser)]
#[command(name = "autogda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled dataset for a targets file.
    Run(RunArgs),
    /// Run experiments against the simulated services.
    Simulate(SimulateArgs),
    /// Recompute objective breakdowns for a dataset.
    Score(ScoreArgs),
    /// Summarize a dataset, report or checkpoint file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON run configuration; merged over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter preset.
    #[arg(long)]
    preset: Option<String>,
    /// Response cache directory [env: AUTOGDA_CACHE_DIR].
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Selection {
    Objective,
    Random,
}

impl From<Selection> for SelectionStrategy {
    fn from(s: Selection) -> Self {
        match s {
            Selection::Objective => SelectionStrategy::Objective,
            Selection::Random => SelectionStrategy::Random,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Targets JSONL: {"evidence_id", "evidence", "claim"} per line.
    #[arg(long)]
    targets: PathBuf,
    /// Dataset JSONL to write.
    #[arg(long)]
    out: PathBuf,
    /// Run report JSON to write.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Continue from checkpoints in the checkpoint directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    selection: Option<Selection>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// First seed; run `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 30)]
    n_evidence: usize,
    #[arg(long, default_value_t = 5)]
    facts_per_evidence: usize,
    #[arg(long, default_value_t = 0.3)]
    teacher_noise: f64,
    /// Defaults to the teacher noise.
    #[arg(long)]
    link_teacher_noise: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    generator_fidelity: f64,
    /// Also run random selection on every world.
    #[arg(long)]
    compare_random: bool,
    /// JSON run configuration for the pipeline.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Experiment summary JSON to write.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    targets: PathBuf,
    /// Breakdown JSONL to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda_d: Option<f64>,
    #[arg(long)]
    lambda_u: Option<f64>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct InspectArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn layered(cfg: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut c = config::load(cfg.preset.as_deref(), cfg.config.as_deref())?;
    config::apply_env(&mut c, config::process_env);
    if let Some(d) = &cfg.cache_dir {
        c.cache_dir = Some(d.clone());
    }
    Ok(c)
}

fn require_roles(config: &RunConfig, roles: &[Role]) -> Result<(), CliError> {
    let missing: Vec<String> =
        roles.iter().filter(|r| config.endpoints.url_for(**r).is_none()).map(|r| r.to_string()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "no endpoint configured for {} (set it in the config file or AUTOGDA_ENDPOINT_*)",
            missing.join(", ")
        )))
    }
}

fn gateway(config: &RunConfig) -> Result<Gateway, CliError> {
    let cache: Arc<dyn ResponseCache> = match &config.cache_dir {
        Some(dir) => Arc::new(DiskCache::open(dir)?),
        None => Arc::new(MemoryCache::new()),
    };
    Ok(Gateway::from_endpoints(&config.endpoints, Some(cache))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut config = layered(&args.cfg)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(d) = args.checkpoint_dir {
        config.checkpoint_dir = Some(d);
    }
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    if let Some(s) = args.selection {
        config.selection = s.into();
    }
    if args.resume && config.checkpoint_dir.is_none() {
        return Err(CliError::Config("--resume needs a checkpoint directory".into()));
    }
    config.validate()?;
    let mut roles = vec![Role::Generator, Role::InitialTeacher, Role::LinkTeacher, Role::Utility, Role::Embedder];
    if config.offspring.paraphrase > 0 {
        roles.push(Role::Paraphraser);
    }
    require_roles(&config, &roles)?;
    if let Some(d) = &config.checkpoint_dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
    }

    let corpus = ingest_targets(&args.targets)?;
    let gw = gateway(&config)?;
    let out = run(&config, &corpus, &gw, RunOptions { resume: args.resume, stop_after: None })?;
    emit_dataset(&out.dataset, &args.out)?;
    if let Some(p) = &args.report {
        write_json(p, &out.report)?;
    }
    for w in &out.report.warnings {
        log::warn!("{w}");
    }

    let r = &out.report;
    println!("wrote {} samples to {}", r.n_samples, args.out.display());
    println!(
        "evidences: {} ok, {} failed; upstream requests: {}",
        r.evidences.len() - r.failed_evidences,
        r.failed_evidences,
        gw.upstream_requests()
    );
    let comp: Vec<String> = r.origin_composition.iter().map(|(o, n)| format!("{}={n}", o.as_str())).collect();
    println!("origins: {}", comp.join(" "));
    println!("objectives monotone: {}", r.objectives_monotone());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    if args.runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    if args.n_evidence == 0 || args.facts_per_evidence == 0 {
        return Err(CliError::Config("--n-evidence and --facts-per-evidence must be at least 1".into()));
    }
    let sim = SimParams {
        generator_fidelity: args.generator_fidelity,
        teacher_noise: args.teacher_noise,
        link_teacher_noise: args.link_teacher_noise.unwrap_or(args.teacher_noise),
    };
    sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let config = config::load(args.preset.as_deref(), args.config.as_deref())?;
    config.validate()?;
    let params = ExperimentParams {
        n_evidences: args.n_evidence,
        facts_per_evidence: args.facts_per_evidence,
        sim,
        config,
        compare_random: args.compare_random,
    };
    let summary = run_experiment(&params, args.seed, args.runs)?;
    if let Some(p) = &args.report {
        write_json(p, &summary)?;
    }
    print_summary(&summary);
    Ok(())
}

fn print_summary(s: &ExperimentSummary) {
    for o in &s.runs {
        let random = o.random.as_ref().map_or(String::new(), |r| format!(" random={:.4}", r.label_accuracy));
        println!(
            "seed {}: objective={:.4}{random} n={} requests={}",
            o.seed, o.objective.label_accuracy, o.objective.n, o.upstream_requests
        );
    }
    println!("mean objective accuracy: {:.4}", s.mean_objective_accuracy);
    if let (Some(r), Some(d), Some(p)) = (s.mean_random_accuracy, s.mean_difference, s.sign_test_p) {
        println!("mean random accuracy: {r:.4}");
        println!("mean difference (objective - random): {d:+.4}");
        println!("wins/losses/ties: {}/{}/{}; sign test p = {p:.3e}", s.wins, s.losses, s.ties);
    }
    println!("objectives monotone: {}", s.all_monotone);
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    let config = layered(&args.cfg)?;
    let weights = Weights {
        lambda_d: args.lambda_d.unwrap_or(config.lambda_d),
        lambda_u: args.lambda_u.unwrap_or(config.lambda_u),
    };
    for (name, v) in [("lambda-d", weights.lambda_d), ("lambda-u", weights.lambda_u)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("--{name} must be non-negative, got {v}")));
        }
    }
    config.endpoints.validate().map_err(CliError::Config)?;
    require_roles(&config, &[Role::Utility, Role::Embedder])?;
    let dataset = read_dataset(&args.dataset)?;
    let corpus = ingest_targets(&args.targets)?;
    if let Some(e) = dataset.iter().find(|e| corpus.get(&e.evidence_id).is_none()) {
        return Err(PipelineError::UnknownEvidence(e.evidence_id.clone()).into());
    }
    let gw = gateway(&config)?;
    let scored = score_examples(&dataset, &corpus, weights, &gw)?;
    match &args.out {
        Some(p) => {
            write_jsonl(p, &scored)?;
            let total: f64 = scored.iter().map(|b| b.contribution).sum();
            println!("scored {} samples; total objective {total:.6}", scored.len());
        }
        None => {
            for b in &scored {
                println!("{}", serde_json::to_string(b).map_err(|e| CliError::Io(e.to_string()))?);
            }
        }
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), CliError> {
    if let Some(p) = &args.dataset {
        inspect_dataset(&read_dataset(p)?);
    } else if let Some(p) = &args.report {
        inspect_report(&read_json(p)?);
    } else if let Some(p) = &args.checkpoint {
        inspect_checkpoint(&read_json(p)?);
    }
    Ok(())
}

fn inspect_dataset(rows: &[LabeledExample]) {
    let mut per_evidence: BTreeMap<&str, usize> = BTreeMap::new();
    let mut origins: BTreeMap<&str, usize> = BTreeMap::new();
    let mut positives = 0;
    for r in rows {
        *per_evidence.entry(&r.evidence_id).or_default() += 1;
        *origins.entry(r.origin.as_str()).or_default() += 1;
        positives += usize::from(r.label == 1);
    }
    let mean_certainty = rows.iter().map(|r| r.certainty).sum::<f64>() / rows.len().max(1) as f64;
    println!("samples: {} across {} evidences", rows.len(), per_evidence.len());
    println!("labels: {} entailed, {} not entailed", positives, rows.len() - positives);
    println!("mean certainty: {mean_certainty:.4}");
    let comp: Vec<String> = origins.iter().map(|(o, n)| format!("{o}={n}")).collect();
    println!("origins: {}", comp.join(" "));
    let max_gen = rows.iter().map(|r| r.generation).max().unwrap_or(0);
    println!("max generation: {max_gen}");
}

fn inspect_report(r: &RunReport) {
    println!("seed {} selection {:?} lambda_d {} lambda_u {}", r.seed, r.selection, r.lambda_d, r.lambda_u);
    println!("samples: {}; failed evidences: {}", r.n_samples, r.failed_evidences);
    for e in &r.evidences {
        match e.status {
            EvidenceStatus::Ok => {
                let hist: Vec<String> = e.objective_history.iter().map(|v| format!("{v:.4}")).collect();
                println!(
                    "{}: iterations={} converged={} objective [{}]",
                    e.evidence_id,
                    e.iterations,
                    e.converged,
                    hist.join(", ")
                );
            }
            EvidenceStatus::Failed => {
                println!("{}: failed: {}", e.evidence_id, e.error.as_deref().unwrap_or(""));
            }
        }
    }
    println!("warnings: {}", r.warnings.len());
}

fn inspect_checkpoint(s: &EvidenceState) {
    println!(
        "evidence {} iteration {} converged {} fingerprint {}",
        s.evidence_id, s.iteration, s.converged, s.fingerprint
    );
    println!("pool {}; selected {}; ancestry {}", s.pool.len(), s.selected.len(), s.ancestry.len());
    for (sample, b) in s.selected.iter().zip(&s.breakdowns) {
        println!(
            "{} label={} r={:.4} gen={} contribution={:.4}  {}",
            sample.sample_id,
            sample.hard_label.bit(),
            sample.certainty,
            sample.generation,
            b.contribution,
            sample.claim
        );
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Score(a) => cmd_score(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
