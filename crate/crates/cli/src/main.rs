//! `ttc` — operator surface for the reranking toolkit: evaluation, ranked
//! runs, program search, frontier extraction, head training, timing, and
//! fixture generation, all emitting machine-readable reports.
//!
//! Exit codes: 0 success, 1 internal error, 2 input error, 3 proposer
//! failure exhausted.

mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::Config;
use ttc_core::dsl;
use ttc_core::encoder::{CostMeter, EncoderProvider};
use ttc_core::eval::{
    evaluate_program, pareto_frontier, read_summary_points, write_report_jsonl, write_summary_csv,
    write_trec_run, GainVariant,
};
use ttc_core::fixtures::{generate, FixtureFamily, FixtureSpec};
use ttc_core::head::{train_head, HeadKind, HeadParams, TrainConfig};
use ttc_core::programs::{find_program, frontier_ids, registry, RegisteredProgram, TaskData};
use ttc_core::search::{run_search, verify_ledger, ProposerSpec, SearchConfig};
use ttc_core::task::{load_task_dir, write_task_dir, Task};

#[derive(Parser)]
#[command(name = "ttc", version, about = "Test-time-compute reranking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Plain-text config file ([provider] / [eval] / [search] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task directories (corpus.jsonl, queries.jsonl, qrels.tsv); overrides
    /// the config value.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed override (also overridable via TTC_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = available cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate programs against the baseline on every task.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// "frontier", a comma-separated id list, or a .ttc pipeline file.
        #[arg(long)]
        programs: Option<String>,
        /// Apply a trained head checkpoint before scoring.
        #[arg(long)]
        head: Option<PathBuf>,
        /// nDCG gain variant: exponential or linear.
        #[arg(long)]
        gain: Option<String>,
    },
    /// Write TREC-style ranked run files for one program.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Registered program id, or a .ttc pipeline file.
        #[arg(long)]
        program: String,
    },
    /// Run the generation loop with a proposer.
    Search {
        #[command(flatten)]
        common: CommonArgs,
        /// Generations to run; overrides the config value.
        #[arg(long)]
        generations: Option<u64>,
        /// replay:<dir>, command:<cmd>, or http:<url>; overrides config.
        #[arg(long)]
        proposer: Option<String>,
    },
    /// Extract the non-dominated subset from a summary CSV.
    Frontier {
        /// Summary CSV produced by `eval`.
        #[arg(long)]
        summary: PathBuf,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a projection head on (query, positive) pairs from the tasks.
    TrainHead {
        #[command(flatten)]
        common: CommonArgs,
        /// whitening, linear, lowrank, or mlp.
        #[arg(long, default_value = "linear")]
        kind: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        holdout_fraction: Option<f64>,
        /// Checkpoint path to write.
        #[arg(long, default_value = "head.ckpt")]
        checkpoint: PathBuf,
    },
    /// Wall-clock split between encoding and algebra per program.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Injected per-text encoder latency in microseconds.
        #[arg(long, default_value_t = 200)]
        delay_us: u64,
        /// Program ids to time (default: the frontier).
        #[arg(long)]
        programs: Option<String>,
    },
    /// Fixture generation.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
    /// Registry inspection.
    Programs {
        #[command(subcommand)]
        command: ProgramsCommand,
    },
    /// Ledger inspection.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// Generate a synthetic task directory from a fixture spec file.
    Generate {
        /// Key-value spec file ([fixture] section).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ProgramsCommand {
    /// Tab-separated registry rows: id, nominal cost, family, adapters.
    List,
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Recompute the hash chain of a ledger file.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify_exit(&err)
        }
    });
}

/// Input problems exit 2, exhausted proposers exit 3, the rest exit 1.
fn classify_exit(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<ttc_core::Error>() {
            use ttc_core::Error as E;
            return match core {
                E::MalformedLine { .. }
                | E::DanglingIds { .. }
                | E::InvalidTask(_)
                | E::InvalidConfig(_)
                | E::DslParse { .. }
                | E::Io { .. }
                | E::Checkpoint(_)
                | E::LedgerCorrupt { .. } => 2,
                E::ProposerFailed(_) => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    let text = format!("{err:#}");
    if text.contains("config") || text.contains("reading") {
        return 2;
    }
    1
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Eval {
            common,
            programs,
            head,
            gain,
        } => cmd_eval(common, programs, head, gain),
        Command::Run { common, program } => cmd_run(common, program),
        Command::Search {
            common,
            generations,
            proposer,
        } => cmd_search(common, generations, proposer),
        Command::Frontier { summary, out } => cmd_frontier(&summary, out.as_deref()),
        Command::TrainHead {
            common,
            kind,
            epochs,
            learning_rate,
            batch_size,
            temperature,
            holdout_fraction,
            checkpoint,
        } => cmd_train_head(
            common,
            &kind,
            epochs,
            learning_rate,
            batch_size,
            temperature,
            holdout_fraction,
            &checkpoint,
        ),
        Command::Bench {
            common,
            delay_us,
            programs,
        } => cmd_bench(common, delay_us, programs),
        Command::Fixtures {
            command: FixturesCommand::Generate { spec, out },
        } => cmd_fixtures_generate(&spec, &out),
        Command::Programs {
            command: ProgramsCommand::List,
        } => {
            for p in registry() {
                println!(
                    "{}\t{}\t{}\t{}",
                    p.spec.id,
                    p.spec.nominal_cost,
                    p.spec.family.as_str(),
                    if p.spec.requires_adapters {
                        "adapters"
                    } else {
                        "any-encoder"
                    }
                );
            }
            Ok(0)
        }
        Command::Ledger {
            command: LedgerCommand::Verify { ledger },
        } => {
            let records = verify_ledger(&ledger)?;
            println!("ledger ok: {} records, chain verified", records.len());
            Ok(0)
        }
    }
}

/// Merge the config file with CLI overrides.
fn effective_config(common: &CommonArgs) -> Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if !common.tasks.is_empty() {
        let joined = common
            .tasks
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(",");
        config.set("eval", "tasks", joined);
    }
    if let Some(seed) = common.seed {
        config.set("general", "seed", seed.to_string());
    }
    if let Some(threads) = common.threads {
        config.set("general", "threads", threads.to_string());
    }
    let threads = config.get_usize("general", "threads", 0)?;
    if threads > 0 {
        // Determinism holds at any thread count; this only caps parallelism.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(config)
}

fn load_tasks(config: &Config) -> Result<Vec<Task>> {
    let dirs = config.task_dirs();
    if dirs.is_empty() {
        bail!("no tasks configured: set [eval] tasks or pass --tasks");
    }
    dirs.iter()
        .map(|dir| load_task_dir(dir).with_context(|| format!("loading task {}", dir.display())))
        .collect()
}

/// Resolve a program selector into runnable registry entries.
fn select_programs(selector: &str) -> Result<Vec<RegisteredProgram>> {
    if selector == "frontier" {
        return Ok(frontier_ids()
            .iter()
            .map(|id| find_program(id).expect("frontier ids are registered"))
            .collect());
    }
    if selector.ends_with(".ttc") {
        let path = Path::new(selector);
        let source = std::fs::read_to_string(path)
            .with_context(|| format!("reading pipeline {}", path.display()))?;
        let pipeline = dsl::CompiledPipeline::new(dsl::parse(&source)?);
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pipeline".into());
        return Ok(vec![RegisteredProgram::compiled(&id, pipeline)]);
    }
    selector
        .split(',')
        .map(|id| {
            let id = id.trim();
            find_program(id).ok_or_else(|| anyhow!("unknown program id {id:?}"))
        })
        .collect()
}

fn write_provenance(out_dir: &Path, config: &Config) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let text = format!(
        "# config_hash={}\n# seed={}\n{}",
        config.hash(),
        config.seed()?,
        config.canonical()
    );
    std::fs::write(out_dir.join("effective_config.txt"), text)
        .context("writing effective_config.txt")?;
    Ok(())
}

fn cmd_eval(
    common: CommonArgs,
    programs: Option<String>,
    head: Option<PathBuf>,
    gain: Option<String>,
) -> Result<i32> {
    let mut config = effective_config(&common)?;
    if let Some(p) = &programs {
        config.set("eval", "programs", p.clone());
    }
    if let Some(g) = &gain {
        config.set("eval", "gain", g.clone());
    }
    let gain = match config.get_or("eval", "gain", "exponential").as_str() {
        "exponential" => GainVariant::Exponential,
        "linear" => GainVariant::Linear,
        other => bail!("unknown gain variant {other:?}"),
    };
    let tasks = load_tasks(&config)?;
    let provider = EncoderProvider::new(config.provider_config()?)?;
    let head_params = match &head {
        Some(path) => Some(HeadParams::load(path)?),
        None => None,
    };
    let selector = config.get_or("eval", "programs", "frontier");
    let selected = select_programs(&selector)?;

    write_provenance(&common.out, &config)?;
    let mut evals = Vec::with_capacity(selected.len());
    for program in &selected {
        evals.push(evaluate_program(
            program,
            &tasks,
            &provider,
            head_params.as_ref(),
            gain,
        )?);
    }
    let seed = config.seed()?;
    write_report_jsonl(&common.out.join("report.jsonl"), &evals, &config.hash(), seed)?;
    write_summary_csv(&common.out.join("summary.csv"), &evals, seed, &config.hash())?;
    for eval in &evals {
        println!(
            "{}\tc={:.3}\tmean_delta={:+.4}\twtl={}/{}/{}",
            eval.program_id,
            eval.cost,
            eval.mean_delta(),
            eval.wtl.0,
            eval.wtl.1,
            eval.wtl.2
        );
    }
    Ok(0)
}

fn cmd_run(common: CommonArgs, program: String) -> Result<i32> {
    let config = effective_config(&common)?;
    let tasks = load_tasks(&config)?;
    let provider = EncoderProvider::new(config.provider_config()?)?;
    let selected = select_programs(&program)?;
    let program = selected
        .first()
        .ok_or_else(|| anyhow!("no program selected"))?;
    write_provenance(&common.out, &config)?;
    for task in &tasks {
        let meter = CostMeter::new();
        let data = TaskData::build(task, &provider, &meter, None)?;
        let ctx = data.context(&provider, &meter);
        let scores = program.run(&ctx)?;
        let path = common.out.join(format!("{}.run.txt", task.task_id));
        write_trec_run(&path, task, &scores, &program.spec.id)?;
        println!("{} -> {}", task.task_id, path.display());
    }
    Ok(0)
}

fn cmd_search(
    common: CommonArgs,
    generations: Option<u64>,
    proposer: Option<String>,
) -> Result<i32> {
    let mut config = effective_config(&common)?;
    if let Some(g) = generations {
        config.set("search", "generations", g.to_string());
    }
    if let Some(p) = &proposer {
        config.set("search", "proposer", p.clone());
    }
    let proposer_spec = parse_proposer(&config.get_or("search", "proposer", ""))?;
    let search_config = SearchConfig {
        generations: config.get_u64("search", "generations", 10)?,
        proposer: proposer_spec,
        seed: config.seed()?,
        constants: Default::default(),
        inspirations: config.get_list("search", "inspirations"),
    };
    let tasks = load_tasks(&config)?;
    let provider = EncoderProvider::new(config.provider_config()?)?;
    write_provenance(&common.out, &config)?;

    let ledger_path = common.out.join("ledger.jsonl");
    let outcome = run_search(&search_config, &tasks, &provider, &ledger_path)?;
    let task_order: Vec<String> = tasks.iter().map(|t| t.task_id.clone()).collect();
    let trajectory = ttc_core::search::export_trajectory(&outcome.records, &task_order);
    std::fs::write(common.out.join("trajectory.csv"), trajectory)
        .context("writing trajectory.csv")?;

    let failures = outcome
        .records
        .iter()
        .filter(|r| r.status == "failed")
        .count();
    println!(
        "search complete: {} generations, {} failures, frontier = {:?}",
        outcome.records.len(),
        failures,
        outcome.frontier
    );
    if !outcome.records.is_empty() && failures == outcome.records.len() {
        let all_proposer = outcome
            .records
            .iter()
            .all(|r| r.error.as_deref().is_some_and(|e| e.starts_with("proposer")));
        if all_proposer {
            return Ok(3);
        }
    }
    Ok(0)
}

fn parse_proposer(value: &str) -> Result<ProposerSpec> {
    let Some((kind, rest)) = value.split_once(':') else {
        bail!("proposer must be replay:<dir>, command:<cmd>, or http:<url>, got {value:?}");
    };
    Ok(match kind {
        "replay" => ProposerSpec::Replay {
            dir: PathBuf::from(rest),
        },
        "command" => ProposerSpec::ExternalCommand {
            command: rest.to_string(),
            timeout_secs: 120,
        },
        "http" => ProposerSpec::Http {
            url: rest.to_string(),
        },
        other => bail!("unknown proposer kind {other:?}"),
    })
}

fn cmd_frontier(summary: &Path, out: Option<&Path>) -> Result<i32> {
    let points = read_summary_points(summary)?;
    let kept = pareto_frontier(&points);
    let mut text = String::from("program,cost,mean_delta\n");
    for p in &kept {
        text.push_str(&format!("{},{},{}\n", p.id, p.cost, p.delta));
    }
    match out {
        Some(path) => std::fs::write(path, text).context("writing frontier csv")?,
        None => print!("{text}"),
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_head(
    common: CommonArgs,
    kind: &str,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    temperature: Option<f64>,
    holdout_fraction: Option<f64>,
    checkpoint: &Path,
) -> Result<i32> {
    let config = effective_config(&common)?;
    let kind = HeadKind::parse(kind)?;
    let tasks = load_tasks(&config)?;
    let provider = EncoderProvider::new(config.provider_config()?)?;

    let mut train_config = TrainConfig {
        seed: config.seed()?,
        ..TrainConfig::default()
    };
    train_config.learning_rate =
        learning_rate.unwrap_or(config.get_f64("train", "learning_rate", 0.05)?);
    train_config.epochs = epochs.unwrap_or(config.get_usize("train", "epochs", 20)?);
    train_config.batch_size = batch_size.unwrap_or(config.get_usize("train", "batch_size", 32)?);
    train_config.temperature =
        temperature.unwrap_or(config.get_f64("train", "temperature", 0.1)?);
    train_config.holdout_fraction =
        holdout_fraction.unwrap_or(config.get_f64("train", "holdout_fraction", 0.25)?);

    let pairs = ttc_core::head::pairs_from_tasks(&tasks, &provider)?;
    if pairs.is_empty() {
        bail!("no (query, positive document) pairs in the configured tasks");
    }
    let head = train_head(&pairs, kind, &train_config)?;
    if let Some(parent) = checkpoint.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    head.save(checkpoint)?;
    println!(
        "trained {} head on {} pairs -> {}",
        kind.as_str(),
        pairs.len(),
        checkpoint.display()
    );
    Ok(0)
}

fn cmd_bench(common: CommonArgs, delay_us: u64, programs: Option<String>) -> Result<i32> {
    let mut config = effective_config(&common)?;
    config.set("provider", "delay_per_text_us", delay_us.to_string());
    let tasks = load_tasks(&config)?;
    let provider = EncoderProvider::new(config.provider_config()?)?;
    let selector = programs.unwrap_or_else(|| "frontier".into());
    let selected = select_programs(&selector)?;
    write_provenance(&common.out, &config)?;

    // Timing lives in its own file so golden outputs stay byte-stable.
    let mut timing = String::from("program\ttotal_ms\tencode_ms\talgebra_ms\ttexts\n");
    for program in &selected {
        let started = Instant::now();
        let meter = CostMeter::new();
        for task in &tasks {
            let data = TaskData::build(task, &provider, &meter, None)?;
            let ctx = data.context(&provider, &meter);
            let _ = program.run(&ctx)?;
        }
        let total = started.elapsed().as_secs_f64() * 1e3;
        let texts = meter.baseline_texts() + meter.program_texts();
        let encode = (texts as f64) * (delay_us as f64) / 1e3;
        let algebra = (total - encode).max(0.0);
        timing.push_str(&format!(
            "{}\t{total:.2}\t{encode:.2}\t{algebra:.2}\t{texts}\n",
            program.spec.id
        ));
        println!(
            "{}: total {total:.1} ms, encode {encode:.1} ms, algebra {algebra:.1} ms",
            program.spec.id
        );
    }
    std::fs::write(common.out.join("timings.txt"), timing).context("writing timings.txt")?;
    Ok(0)
}

fn cmd_fixtures_generate(spec_path: &Path, out: &Path) -> Result<i32> {
    let config = Config::load(spec_path)?;
    let family = match config.get_or("fixture", "family", "topical").as_str() {
        "topical" => FixtureFamily::Topical,
        "needle" => FixtureFamily::Needle,
        "mismatch" => FixtureFamily::Mismatch,
        "boilerplate" => FixtureFamily::Boilerplate,
        other => bail!("unknown fixture family {other:?}"),
    };
    let defaults = FixtureSpec::default();
    let spec = FixtureSpec {
        seed: config.get_u64("fixture", "seed", defaults.seed)?,
        n_queries: config.get_usize("fixture", "n_queries", defaults.n_queries)?,
        n_docs: config.get_usize("fixture", "n_docs", defaults.n_docs)?,
        n_topics: config.get_usize("fixture", "n_topics", defaults.n_topics)?,
        topic_vocab: config.get_usize("fixture", "topic_vocab", defaults.topic_vocab)?,
        doc_sentences_min: config.get_usize(
            "fixture",
            "doc_sentences_min",
            defaults.doc_sentences_min,
        )?,
        doc_sentences_max: config.get_usize(
            "fixture",
            "doc_sentences_max",
            defaults.doc_sentences_max,
        )?,
        words_per_sentence: config.get_usize(
            "fixture",
            "words_per_sentence",
            defaults.words_per_sentence,
        )?,
        distractor_per_mille: config.get_u64(
            "fixture",
            "distractor_per_mille",
            defaults.distractor_per_mille as u64,
        )? as u32,
        family,
        namespace: config.get_or("fixture", "namespace", &defaults.namespace),
        boiler_max_sentences: config.get_usize(
            "fixture",
            "boiler_max_sentences",
            defaults.boiler_max_sentences,
        )?,
        secondary_topic_pct: config.get_usize(
            "fixture",
            "secondary_topic_pct",
            defaults.secondary_topic_pct,
        )?,
    };
    let task = generate(&spec);
    write_task_dir(&task, out)?;
    println!(
        "wrote task {} ({} queries, {} docs) -> {}",
        task.task_id,
        task.queries.len(),
        task.corpus.len(),
        out.display()
    );
    Ok(0)
}
