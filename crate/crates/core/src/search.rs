//! The generation loop: a proposer emits one pipeline per generation, the
//! evaluator scores it once on every task with fixed constants, the frontier
//! admits strict improvements, and every outcome lands in an append-only
//! hash-chained JSONL ledger.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{self, CompiledPipeline};
use crate::encoder::EncoderProvider;
use crate::error::{Error, Result};
use crate::eval::{evaluate_program, frontier_admission, GainVariant};
use crate::programs::{Constants, RegisteredProgram};
use crate::task::Task;

/// Wire document sent to the proposer each generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposerInput {
    pub frontier: Vec<FrontierEntry>,
    pub history: Vec<HistorySummary>,
    pub inspirations: Vec<String>,
}

/// A frontier program with full source; the proposer builds on these.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub id: String,
    pub source: String,
    pub mean_delta: f64,
    pub wtl: (usize, usize, usize),
    pub cost: f64,
}

/// Ruled-out or superseded programs keep their analysis but drop their
/// source to bound the payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistorySummary {
    pub id: String,
    pub generation: u64,
    pub mean_delta: f64,
    pub per_task_delta: BTreeMap<String, f64>,
    pub wtl: (usize, usize, usize),
    pub cost: f64,
    pub novelty: String,
    pub hypothesis: String,
}

/// What a proposer must return.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Proposal {
    pub source: String,
    #[serde(default)]
    pub novelty: String,
    #[serde(default)]
    pub hypothesis: String,
    #[serde(default)]
    pub parent: Option<String>,
}

/// Proposer backends.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ProposerSpec {
    /// Spawn a command; one JSON document on stdin, one on stdout.
    ExternalCommand { command: String, timeout_secs: u64 },
    /// POST the input to `{url}/propose`.
    Http { url: String },
    /// Read pipeline files from a directory in sorted order. Header
    /// comments `# novelty:`, `# hypothesis:`, and `# parent:` carry the
    /// metadata. The deterministic test mode.
    Replay { dir: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    pub generations: u64,
    pub proposer: ProposerSpec,
    pub seed: u64,
    pub constants: Constants,
    #[serde(default)]
    pub inspirations: Vec<String>,
    /// Provenance tag echoed into every ledger record.
    #[serde(default)]
    pub config_hash: String,
}

/// One ledger row. Records are immutable once written; each carries the
/// hash of its predecessor so tampering is detectable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MemoryRecord {
    pub generation: u64,
    pub program_id: String,
    pub status: String,
    #[serde(default)]
    pub error: Option<String>,
    pub source: String,
    pub novelty: String,
    pub hypothesis: String,
    pub parent: Option<String>,
    pub per_task_delta: BTreeMap<String, f64>,
    pub wtl: (usize, usize, usize),
    pub cost: f64,
    pub cost_amortized: f64,
    pub mean_delta: f64,
    pub admitted: bool,
    pub constants: Constants,
    pub seed: u64,
    pub config_hash: String,
    pub prev_hash: String,
    pub hash: String,
}

impl MemoryRecord {
    /// Hash over the canonical serialization with the hash field blanked.
    fn compute_hash(&self) -> String {
        let mut blanked = self.clone();
        blanked.hash = String::new();
        let body = serde_json::to_string(&blanked).expect("record serializes");
        let digest = Sha256::digest(body.as_bytes());
        hex_string(&digest)
    }

    fn seal(mut self) -> Self {
        self.hash = self.compute_hash();
        self
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Short content id for a proposed program.
fn short_hash(text: &str) -> String {
    hex_string(&Sha256::digest(text.as_bytes()))[..8].to_string()
}

// --- proposers --------------------------------------------------------------

/// Replay state lives outside the trait so reruns are bit-reproducible.
pub struct Proposer {
    spec: ProposerSpec,
    replay_files: Vec<PathBuf>,
    replay_at: usize,
}

impl Proposer {
    pub fn new(spec: ProposerSpec) -> Result<Self> {
        let replay_files = match &spec {
            ProposerSpec::Replay { dir } => {
                let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                    .map_err(|e| Error::io(dir, e))?
                    .filter_map(|entry| entry.ok().map(|e| e.path()))
                    .filter(|p| p.is_file())
                    .collect();
                files.sort();
                files
            }
            _ => Vec::new(),
        };
        Ok(Proposer {
            spec,
            replay_files,
            replay_at: 0,
        })
    }

    pub fn propose(&mut self, input: &ProposerInput) -> Result<Proposal> {
        match &self.spec {
            ProposerSpec::Replay { .. } => {
                let path = self
                    .replay_files
                    .get(self.replay_at)
                    .ok_or_else(|| Error::ProposerFailed("replay directory exhausted".into()))?
                    .clone();
                self.replay_at += 1;
                let source =
                    std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Ok(parse_replay_file(&source))
            }
            ProposerSpec::ExternalCommand {
                command,
                timeout_secs,
            } => propose_external(command, *timeout_secs, input),
            ProposerSpec::Http { url } => propose_http(url, input),
        }
    }
}

/// Header comments carry metadata; the rest is the pipeline source.
fn parse_replay_file(source: &str) -> Proposal {
    let mut novelty = String::new();
    let mut hypothesis = String::new();
    let mut parent = None;
    for line in source.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("# novelty:") {
            novelty = rest.trim().to_string();
        } else if let Some(rest) = trimmed.strip_prefix("# hypothesis:") {
            hypothesis = rest.trim().to_string();
        } else if let Some(rest) = trimmed.strip_prefix("# parent:") {
            parent = Some(rest.trim().to_string());
        }
    }
    Proposal {
        source: source.to_string(),
        novelty,
        hypothesis,
        parent,
    }
}

fn propose_external(command: &str, timeout_secs: u64, input: &ProposerInput) -> Result<Proposal> {
    let fail = |msg: String| Error::ProposerFailed(msg);
    let mut parts = command.split_whitespace();
    let bin = parts
        .next()
        .ok_or_else(|| fail("empty proposer command".into()))?;
    let mut child = Command::new(bin)
        .args(parts)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| fail(format!("spawn {command:?}: {e}")))?;

    let payload = serde_json::to_vec(input)?;
    if let Some(mut stdin) = child.stdin.take() {
        stdin
            .write_all(&payload)
            .map_err(|e| fail(format!("write to proposer: {e}")))?;
    }
    let mut stdout = child.stdout.take().expect("stdout piped");

    // Reader thread plus deadline poll; a stuck proposer is killed and the
    // generation is skipped.
    let (tx, rx) = std::sync::mpsc::channel();
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        let _ = tx.send(buf);
    });
    let output = match rx.recv_timeout(Duration::from_secs(timeout_secs)) {
        Ok(buf) => buf,
        Err(_) => {
            let _ = child.kill();
            let _ = reader.join();
            return Err(fail(format!("proposer timed out after {timeout_secs}s")));
        }
    };
    let _ = reader.join();
    let status = child
        .wait()
        .map_err(|e| fail(format!("wait on proposer: {e}")))?;
    if !status.success() {
        return Err(fail(format!("proposer exited with {status}")));
    }
    serde_json::from_slice(&output).map_err(|e| fail(format!("malformed proposer output: {e}")))
}

fn propose_http(url: &str, input: &ProposerInput) -> Result<Proposal> {
    let full = format!("{}/propose", url.trim_end_matches('/'));
    let mut response = ureq::post(&full)
        .send_json(input)
        .map_err(|e| Error::ProposerFailed(format!("POST {full}: {e}")))?;
    response
        .body_mut()
        .read_json()
        .map_err(|e| Error::ProposerFailed(format!("malformed proposer response: {e}")))
}

// --- the loop ---------------------------------------------------------------

pub struct SearchOutcome {
    pub records: Vec<MemoryRecord>,
    /// Admitted program ids in admission order, starting from the baseline.
    pub frontier: Vec<String>,
}

/// Run the loop for `config.generations` generations, appending one record
/// per generation to `ledger_path`. Proposer failures and evaluation errors
/// append failure records and the loop continues; the frontier only moves on
/// strict mean improvement.
pub fn run_search(
    config: &SearchConfig,
    tasks: &[Task],
    provider: &EncoderProvider,
    ledger_path: &Path,
) -> Result<SearchOutcome> {
    let mut proposer = Proposer::new(config.proposer.clone())?;
    let mut records: Vec<MemoryRecord> = Vec::new();
    let mut prev_hash = String::from("genesis");
    let mut known_sources: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    let mut admitted_means: Vec<f64> = Vec::new();
    let mut frontier: Vec<String> = vec!["p0".to_string()];
    let mut frontier_entries: Vec<FrontierEntry> = vec![FrontierEntry {
        id: "p0".into(),
        source: "fuse rrf(dense)\n".into(),
        mean_delta: 0.0,
        wtl: (0, tasks.len(), 0),
        cost: 1.0,
    }];
    known_sources.insert("fuse rrf(dense)\n".to_string());

    let mut ledger = std::fs::File::create(ledger_path).map_err(|e| Error::io(ledger_path, e))?;
    let mut history: Vec<HistorySummary> = Vec::new();

    for generation in 1..=config.generations {
        let input = ProposerInput {
            frontier: frontier_entries.clone(),
            history: history.clone(),
            inspirations: config.inspirations.clone(),
        };
        let outcome = run_generation(
            generation,
            config,
            tasks,
            provider,
            &mut proposer,
            &input,
            &known_sources,
            &admitted_means,
        );

        let mut record = match outcome {
            Ok(record) => record,
            Err(reason) => failure_record(generation, &reason, config),
        };
        record.prev_hash = prev_hash.clone();
        let record = record.seal();
        prev_hash = record.hash.clone();
        let line = serde_json::to_string(&record)?;
        ledger
            .write_all(line.as_bytes())
            .and_then(|_| ledger.write_all(b"\n"))
            .map_err(|e| Error::io(ledger_path, e))?;

        if record.status == "ok" {
            known_sources.insert(record.source.clone());
            if record.admitted {
                admitted_means.push(record.mean_delta);
                frontier.push(record.program_id.clone());
                frontier_entries.push(FrontierEntry {
                    id: record.program_id.clone(),
                    source: record.source.clone(),
                    mean_delta: record.mean_delta,
                    wtl: record.wtl,
                    cost: record.cost,
                });
            }
            history.push(HistorySummary {
                id: record.program_id.clone(),
                generation,
                mean_delta: record.mean_delta,
                per_task_delta: record.per_task_delta.clone(),
                wtl: record.wtl,
                cost: record.cost,
                novelty: record.novelty.clone(),
                hypothesis: record.hypothesis.clone(),
            });
        }
        records.push(record);
    }

    Ok(SearchOutcome { records, frontier })
}

/// Propose, validate, compile, and evaluate one generation. Any failure
/// string becomes a failure record upstream.
#[allow(clippy::too_many_arguments)]
fn run_generation(
    generation: u64,
    config: &SearchConfig,
    tasks: &[Task],
    provider: &EncoderProvider,
    proposer: &mut Proposer,
    input: &ProposerInput,
    known_sources: &std::collections::BTreeSet<String>,
    admitted_means: &[f64],
) -> std::result::Result<MemoryRecord, String> {
    let proposal = proposer
        .propose(input)
        .map_err(|e| format!("proposer: {e}"))?;
    let ast = dsl::parse(&proposal.source).map_err(|e| format!("parse: {e}"))?;
    let canonical = dsl::round_trip(&ast);
    if known_sources.contains(&canonical) {
        return Err("duplicate-structure: canonical form already registered".into());
    }
    let pipeline = CompiledPipeline::new(ast);
    let program_id = format!("g{generation:03}_{}", short_hash(&canonical));
    let program = RegisteredProgram::compiled(&program_id, pipeline);

    // Exactly one evaluation on all tasks, fixed constants, no sweep.
    let eval = evaluate_program(&program, tasks, provider, None, GainVariant::Exponential)
        .map_err(|e| format!("evaluate: {e}"))?;
    let mean_delta = eval.mean_delta();
    let admitted = frontier_admission(admitted_means, mean_delta);

    Ok(MemoryRecord {
        generation,
        program_id,
        status: "ok".into(),
        error: None,
        source: canonical,
        novelty: proposal.novelty,
        hypothesis: proposal.hypothesis,
        parent: proposal.parent,
        per_task_delta: eval.per_task_delta_map(),
        wtl: eval.wtl,
        cost: eval.cost,
        cost_amortized: eval.cost_amortized,
        mean_delta,
        admitted,
        constants: config.constants.clone(),
        seed: config.seed,
        config_hash: config.config_hash.clone(),
        prev_hash: String::new(),
        hash: String::new(),
    })
}

fn failure_record(generation: u64, reason: &str, config: &SearchConfig) -> MemoryRecord {
    MemoryRecord {
        generation,
        program_id: format!("g{generation:03}_failed"),
        status: "failed".into(),
        error: Some(reason.to_string()),
        source: String::new(),
        novelty: String::new(),
        hypothesis: String::new(),
        parent: None,
        per_task_delta: BTreeMap::new(),
        wtl: (0, 0, 0),
        cost: 1.0,
        cost_amortized: 1.0,
        mean_delta: 0.0,
        admitted: false,
        constants: config.constants.clone(),
        seed: config.seed,
        config_hash: config.config_hash.clone(),
        prev_hash: String::new(),
        hash: String::new(),
    }
}

/// Read a ledger back, verifying the hash chain. Returns the records or the
/// index of the first corrupt row.
pub fn verify_ledger(path: &Path) -> Result<Vec<MemoryRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut prev_hash = String::from("genesis");
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MemoryRecord =
            serde_json::from_str(&line).map_err(|e| Error::LedgerCorrupt {
                index,
                message: format!("bad json: {e}"),
            })?;
        if record.prev_hash != prev_hash {
            return Err(Error::LedgerCorrupt {
                index,
                message: format!(
                    "prev_hash {} does not chain to {}",
                    record.prev_hash, prev_hash
                ),
            });
        }
        if record.compute_hash() != record.hash {
            return Err(Error::LedgerCorrupt {
                index,
                message: "record hash does not match its content".into(),
            });
        }
        prev_hash = record.hash.clone();
        records.push(record);
    }
    Ok(records)
}

/// Per-program trajectory rows: generation, id, cost, then one delta column
/// per task in fixed order.
pub fn export_trajectory(records: &[MemoryRecord], task_order: &[String]) -> String {
    let mut out = String::new();
    if let Some(first) = records.first() {
        out.push_str(&format!(
            "# config_hash={} seed={}\n",
            first.config_hash, first.seed
        ));
    }
    out.push_str("generation,program_id,cost");
    for task in task_order {
        out.push_str(&format!(",delta:{task}"));
    }
    out.push('\n');
    for record in records {
        if record.status != "ok" {
            continue;
        }
        out.push_str(&format!(
            "{},{},{}",
            record.generation, record.program_id, record.cost
        ));
        for task in task_order {
            let delta = record.per_task_delta.get(task).copied().unwrap_or(0.0);
            out.push_str(&format!(",{delta}"));
        }
        out.push('\n');
    }
    out
}
