//! The `arena` command: one subcommand per pipeline stage, all state in the
//! append-only event log, every report recomputed from that log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use arena_core::agents::{self, AgentError};
use arena_core::bench::{self, BenchError, BenchItem, BenchOptions};
use arena_core::config::{ConfigError, EngineConfig};
use arena_core::gateway::GatewayError;
use arena_core::media::MediaError;
use arena_core::orchestrator::{self, BattleContext, CampaignOptions, OrchestratorError};
use arena_core::rating::{
    leaderboard, segment_leaderboard, verdict_histogram, RatingError,
};
use arena_core::report;
use arena_core::store::{replay, Event, EventLogWriter, ReplayState, StoreError};

#[derive(Parser)]
#[command(
    name = "arena",
    version,
    about = "Arena engine for pairwise evaluation of video-analysis models"
)]
struct Cli {
    /// Engine config file.
    #[arg(long, global = true, default_value = "arena.toml")]
    config: PathBuf,
    /// Overrides the scheduler seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides scheduler parallelism from the config.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register videos from a manifest into the log.
    Ingest {
        /// Manifest path; defaults to the config's registry.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Create personas and seed questions for every registered video.
    Simulate,
    /// Run battles until the target count is recorded.
    Battle {
        /// Overrides scheduler.target_battles from the config.
        #[arg(long)]
        target: Option<usize>,
    },
    /// Evolve harder questions out of judged battles.
    Evolve {
        /// Overrides scheduler.evolution_rounds from the config.
        #[arg(long)]
        rounds: Option<u32>,
    },
    /// Print the leaderboard recomputed from the log.
    Rank {
        /// Restrict to one segment, e.g. --filter segment=bucket:8-15s
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
    },
    /// Score one pool model against reference answers.
    Bench {
        /// Model id from the pool.
        #[arg(long)]
        model: String,
        /// Line-delimited bench item file.
        #[arg(long)]
        items: Option<PathBuf>,
        /// Line-delimited human verdict file resolved against the log.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
    },
    /// Render everything the log supports: leaderboard, bench, tallies.
    Report {
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Records,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
    Backend(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(detail) => write!(f, "config error: {detail}"),
            CliError::Data(detail) => write!(f, "data error: {detail}"),
            CliError::Backend(detail) => write!(f, "backend error: {detail}"),
            CliError::Internal(detail) => write!(f, "internal error: {detail}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Serialize(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MediaError> for CliError {
    fn from(e: MediaError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<RatingError> for CliError {
    fn from(e: RatingError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Gateway(inner) => inner.into(),
            AgentError::Media(inner) => inner.into(),
            AgentError::ParseFailure { .. } => CliError::Backend(e.to_string()),
            AgentError::ContextMismatch(_) => CliError::Data(e.to_string()),
            AgentError::Template { .. } => CliError::Internal(e.to_string()),
        }
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Store(inner) => inner.into(),
            OrchestratorError::Agent(inner) => inner.into(),
            OrchestratorError::Gateway(inner) => inner.into(),
            OrchestratorError::InvalidTransition { .. } => CliError::Internal(e.to_string()),
            OrchestratorError::PoolTooSmall(_)
            | OrchestratorError::InventoryExhausted { .. }
            | OrchestratorError::EmptyInventory => CliError::Data(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::AllItemsFailed { .. } => CliError::Backend(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = EngineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.scheduler.seed = seed;
    }
    if let Some(parallelism) = cli.parallelism {
        if parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        config.scheduler.parallelism = parallelism;
    }
    match cli.command {
        Command::Ingest { manifest } => cmd_ingest(&config, manifest),
        Command::Simulate => cmd_simulate(&config).await,
        Command::Battle { target } => cmd_battle(&config, target).await,
        Command::Evolve { rounds } => cmd_evolve(&config, rounds).await,
        Command::Rank { filter, format } => cmd_rank(&config, filter, format),
        Command::Bench {
            model,
            items,
            verdicts,
            format,
        } => cmd_bench(&config, model, items, verdicts, format).await,
        Command::Report { filter, format } => cmd_report(&config, filter, format),
    }
}

fn cmd_ingest(config: &EngineConfig, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let manifest = manifest
        .or_else(|| config.registry.clone())
        .ok_or_else(|| {
            CliError::Config("no manifest: pass --manifest or set registry in the config".into())
        })?;
    let videos = arena_core::media::ingest_manifest(&manifest)?;
    let mut writer = EventLogWriter::open(&config.storage_root)?;
    let state = replay(&config.storage_root)?;
    let mut registered = 0usize;
    let mut skipped = 0usize;
    for meta in videos {
        if state.videos.contains_key(&meta.video_id) {
            skipped += 1;
            continue;
        }
        writer.append(&Event::VideoRegistered { meta })?;
        registered += 1;
    }
    println!("registered {registered} videos ({skipped} already present)");
    Ok(())
}

async fn cmd_simulate(config: &EngineConfig) -> Result<(), CliError> {
    let examiner = config.build_examiner()?;
    let mut writer = EventLogWriter::open(&config.storage_root)?;
    let state = replay(&config.storage_root)?;
    if state.videos.is_empty() {
        return Err(CliError::Data(
            "no videos registered; run ingest first".into(),
        ));
    }
    let mut personas_created = 0usize;
    let mut questions_created = 0usize;
    for video in state.videos.values() {
        let existing: BTreeSet<&String> = state
            .personas
            .values()
            .filter(|p| p.video_id == video.video_id)
            .map(|p| &p.persona_id)
            .collect();
        let personas = if existing.len() >= 3 {
            state
                .personas
                .values()
                .filter(|p| p.video_id == video.video_id)
                .cloned()
                .collect::<Vec<_>>()
        } else {
            let generated = agents::generate_personas(video, &examiner).await?;
            for persona in &generated {
                if existing.contains(&persona.persona_id) {
                    continue;
                }
                writer.append(&Event::PersonaCreated {
                    persona: persona.clone(),
                })?;
                personas_created += 1;
            }
            generated
        };
        for persona in &personas {
            let already_asked = state
                .questions
                .values()
                .any(|q| q.persona_id == persona.persona_id);
            if already_asked {
                continue;
            }
            let question = agents::generate_question(persona, video, &examiner).await?;
            writer.append(&Event::QuestionCreated { question })?;
            questions_created += 1;
        }
    }
    println!(
        "created {personas_created} personas and {questions_created} questions across {} videos",
        state.videos.len()
    );
    Ok(())
}

async fn cmd_battle(config: &EngineConfig, target: Option<usize>) -> Result<(), CliError> {
    let target_battles = target.unwrap_or(config.scheduler.target_battles);
    if target_battles == 0 {
        return Err(CliError::Config(
            "target battle count is 0; pass --target or set scheduler.target_battles".into(),
        ));
    }
    let pool = config.build_pool()?;
    let judge = config.build_judge()?;
    let mut writer = EventLogWriter::open(&config.storage_root)?;
    let state = replay(&config.storage_root)?;
    if state.questions.is_empty() {
        return Err(CliError::Data(
            "no questions in the log; run simulate first".into(),
        ));
    }
    let ctx = BattleContext {
        pool: &pool,
        judge: &judge,
        examiner_model: config.examiner.model_id.clone(),
        videos: &state.videos,
        questions: &state.questions,
        personas: &state.personas,
        two_pass: config.judging.two_pass,
    };
    let options = CampaignOptions {
        target_battles,
        parallelism: config.scheduler.parallelism,
        seed: config.scheduler.seed,
    };
    let summary = orchestrator::run_campaign(&mut writer, &state, &ctx, options, |done, total| {
        if done % 50 == 0 || done == total {
            eprintln!("battles: {done}/{total}");
        }
    })
    .await?;
    if summary.resumed > 0 {
        println!("resumed: {} battles were already recorded", summary.resumed);
    }
    println!(
        "scheduled {} battles: {} recorded, {} failed",
        summary.scheduled, summary.recorded, summary.failed
    );
    println!("{}", report::histogram_line(&summary.histogram));
    Ok(())
}

async fn cmd_evolve(config: &EngineConfig, rounds: Option<u32>) -> Result<(), CliError> {
    let rounds = rounds.unwrap_or(config.scheduler.evolution_rounds).max(1);
    let examiner = config.build_examiner()?;
    let mut writer = EventLogWriter::open(&config.storage_root)?;
    for round in 1..=rounds {
        let state = replay(&config.storage_root)?;
        if state.battles.is_empty() {
            return Err(CliError::Data(
                "no recorded battles; run battle first".into(),
            ));
        }
        let summary = orchestrator::run_evolution_round(
            &mut writer,
            &state,
            &examiner,
            config.scheduler.max_evolution_attempts,
        )
        .await?;
        println!(
            "round {round}: {} evolved, {} exhausted, {} parents rated, {} waiting for battles",
            summary.candidates_accepted,
            summary.exhausted,
            summary.parents_rated,
            summary.skipped_unbattled
        );
    }
    Ok(())
}

fn parse_filter(filter: Option<String>) -> Result<Option<String>, CliError> {
    match filter {
        None => Ok(None),
        Some(raw) => match raw.split_once('=') {
            Some(("segment", tag)) if !tag.is_empty() => Ok(Some(tag.to_string())),
            _ => Err(CliError::Config(format!(
                "--filter must look like segment=<tag>, got {raw:?}"
            ))),
        },
    }
}

fn empty_log_error(config: &EngineConfig, state: &ReplayState) -> CliError {
    let mut detail = format!(
        "EMPTY_LOG: no recorded battles under {}",
        config.storage_root.display()
    );
    if !state.failed.is_empty() {
        detail.push_str(&format!(
            " ({} failed battles present, none succeeded)",
            state.failed.len()
        ));
    }
    CliError::Data(detail)
}

fn cmd_rank(
    config: &EngineConfig,
    filter: Option<String>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let filter = parse_filter(filter)?;
    let state = replay(&config.storage_root)?;
    let outcomes = state.outcomes();
    if outcomes.is_empty() {
        return Err(empty_log_error(config, &state));
    }
    let (rows, segments) = match filter {
        Some(tag) => (
            segment_leaderboard(&outcomes, &tag, &config.elo, &config.bt)?,
            Vec::new(),
        ),
        None => {
            let segments = report::bucket_segments();
            (
                leaderboard(&outcomes, &config.elo, &config.bt, &segments)?,
                segments,
            )
        }
    };
    match format {
        OutputFormat::Table => print!("{}", report::leaderboard_table(&rows, &segments)),
        OutputFormat::Records => print!(
            "{}",
            report::records(&rows).map_err(|e| CliError::Internal(e.to_string()))?
        ),
    }
    Ok(())
}

async fn cmd_bench(
    config: &EngineConfig,
    model: String,
    items_path: Option<PathBuf>,
    verdicts_path: Option<PathBuf>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let pool = config.build_pool()?;
    let candidate = pool
        .get(&model)
        .map_err(|_| CliError::Config(format!("model {model:?} is not in the pool")))?;
    let judge = config.build_judge()?;
    let mut writer = EventLogWriter::open(&config.storage_root)?;
    let state = replay(&config.storage_root)?;

    let items: Vec<BenchItem> = match (items_path, verdicts_path) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "pass exactly one of --items / --verdicts".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Config(
                "pass --items <file> or --verdicts <file>".into(),
            ))
        }
        (Some(path), None) => bench::load_items(&path)?,
        (None, Some(path)) => {
            let import = bench::import_human_verdicts(&path, &state)?;
            if import.skipped_ties > 0 {
                eprintln!("skipped {} tie-labeled rows", import.skipped_ties);
            }
            import.items
        }
    };

    let prior: BTreeMap<&String, (f64, f64)> = state
        .bench_scored
        .iter()
        .filter(|(m, ..)| *m == model)
        .map(|(_, item_id, sel, rej)| (item_id, (*sel, *rej)))
        .collect();
    let todo: Vec<BenchItem> = items
        .iter()
        .filter(|item| !prior.contains_key(&item.item_id))
        .cloned()
        .collect();

    let mut new_points: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    if !todo.is_empty() {
        let options = BenchOptions {
            seed: config.scheduler.seed,
            parallelism: config.scheduler.parallelism,
            judge_frames: config.judging.bench_frames,
        };
        match bench::run_bench(&candidate, &todo, &state.videos, &judge, options).await {
            Ok(bench_report) => {
                for score in &bench_report.item_scores {
                    writer.append(&Event::BenchItemScored {
                        model_id: model.clone(),
                        item_id: score.item_id.clone(),
                        vs_selected: score.points_vs_selected,
                        vs_rejected: score.points_vs_rejected,
                    })?;
                    new_points.insert(
                        score.item_id.clone(),
                        (score.points_vs_selected, score.points_vs_rejected),
                    );
                }
                for (item_id, cause) in &bench_report.failures {
                    writer.append(&Event::BenchItemFailed {
                        model_id: model.clone(),
                        item_id: item_id.clone(),
                        cause: cause.clone(),
                    })?;
                }
                failures = bench_report.failures;
            }
            // Earlier runs already banked scores; report those rather than
            // discarding them over a bad retry pass.
            Err(BenchError::AllItemsFailed { attempted, .. }) if !prior.is_empty() => {
                eprintln!("all {attempted} remaining items failed; reporting banked scores only");
                for item in &todo {
                    failures.push((item.item_id.clone(), "every retried item failed".to_string()));
                }
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut points = Vec::new();
    for item in &items {
        if let Some(p) = prior.get(&item.item_id) {
            points.push(*p);
        } else if let Some(p) = new_points.get(&item.item_id) {
            points.push(*p);
        }
    }
    for (item_id, cause) in &failures {
        eprintln!("item {item_id} failed: {cause}");
    }
    let resumed = items.len() - todo.len();
    if resumed > 0 {
        eprintln!("resumed: {resumed} items were already scored");
    }
    let score = bench::aggregate_points(&model, &points, failures.len())?;
    match format {
        OutputFormat::Table => print!("{}", report::bench_table(&[score])),
        OutputFormat::Records => print!(
            "{}",
            report::records(&[score]).map_err(|e| CliError::Internal(e.to_string()))?
        ),
    }
    Ok(())
}

fn bench_rows_from_state(state: &ReplayState) -> Vec<bench::BenchScore> {
    let mut points_by_model: BTreeMap<&String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut scored_items: BTreeMap<&String, BTreeSet<&String>> = BTreeMap::new();
    for (model_id, item_id, sel, rej) in &state.bench_scored {
        points_by_model.entry(model_id).or_default().push((*sel, *rej));
        scored_items.entry(model_id).or_default().insert(item_id);
    }
    let mut failed_by_model: BTreeMap<&String, usize> = BTreeMap::new();
    for (model_id, item_id, _) in &state.bench_failed {
        let recovered = scored_items
            .get(model_id)
            .is_some_and(|items| items.contains(item_id));
        if !recovered {
            *failed_by_model.entry(model_id).or_default() += 1;
        }
    }
    points_by_model
        .into_iter()
        .filter_map(|(model_id, points)| {
            let failed = failed_by_model.get(model_id).copied().unwrap_or(0);
            bench::aggregate_points(model_id, &points, failed).ok()
        })
        .collect()
}

fn cmd_report(
    config: &EngineConfig,
    filter: Option<String>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let filter = parse_filter(filter)?;
    let state = replay(&config.storage_root)?;
    let outcomes = state.outcomes();
    let bench_rows = bench_rows_from_state(&state);
    if outcomes.is_empty() && bench_rows.is_empty() {
        return Err(empty_log_error(config, &state));
    }

    let mut out = String::new();
    if !outcomes.is_empty() {
        let (rows, segments) = match &filter {
            Some(tag) => (
                segment_leaderboard(&outcomes, tag, &config.elo, &config.bt)?,
                Vec::new(),
            ),
            None => {
                let segments = report::bucket_segments();
                (
                    leaderboard(&outcomes, &config.elo, &config.bt, &segments)?,
                    segments,
                )
            }
        };
        match format {
            OutputFormat::Table => {
                out.push_str("Arena leaderboard\n");
                out.push_str(&report::leaderboard_table(&rows, &segments));
                out.push_str(&report::histogram_line(&verdict_histogram(&outcomes)));
                out.push('\n');
            }
            OutputFormat::Records => {
                out.push_str(
                    &report::records(&rows).map_err(|e| CliError::Internal(e.to_string()))?,
                );
            }
        }
    }
    if !bench_rows.is_empty() {
        match format {
            OutputFormat::Table => {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str("Bench scores\n");
                out.push_str(&report::bench_table(&bench_rows));
            }
            OutputFormat::Records => {
                out.push_str(
                    &report::records(&bench_rows)
                        .map_err(|e| CliError::Internal(e.to_string()))?,
                );
            }
        }
    }
    print!("{out}");
    Ok(())
}
