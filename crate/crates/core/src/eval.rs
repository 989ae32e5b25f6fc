//! Evaluation harness: nDCG@10, per-task deltas versus the trivial baseline,
//! win/tie/loss counts, pooled median and win-rate, paired bootstrap,
//! Pareto-frontier extraction, and report emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{CostMeter, EncoderProvider};
use crate::error::{Error, Result};
use crate::fusion::ranks_from_scores;
use crate::head::HeadParams;
use crate::programs::{RegisteredProgram, TaskData};
use crate::rng::SplitMix64;
use crate::task::Task;

/// Gain function for DCG. The exponential default matches the common
/// benchmark protocol; the linear variant is exposed for sensitivity runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainVariant {
    Exponential,
    Linear,
}

impl GainVariant {
    fn gain(&self, rel: u32) -> f64 {
        match self {
            GainVariant::Exponential => (2f64).powi(rel as i32) - 1.0,
            GainVariant::Linear => rel as f64,
        }
    }
}

/// Default delta threshold for win/tie/loss counting.
pub const WTL_THRESHOLD: f64 = 0.001;
/// Default bootstrap resample count.
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

/// nDCG@k for an ordering of doc ids, graded by `grades`. Queries with no
/// positive-grade document score 0 and are counted, not skipped: skipping
/// would silently change task means.
pub fn ndcg_at_k(
    order: &[&str],
    grades: &BTreeMap<&str, u32>,
    k: usize,
    gain: GainVariant,
) -> f64 {
    debug_assert!(k >= 1);
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| {
            let rel = grades.get(d).copied().unwrap_or(0);
            gain.gain(rel) / ((i + 2) as f64).log2()
        })
        .sum();
    let mut ideal: Vec<u32> = grades.values().copied().filter(|g| *g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, rel)| gain.gain(*rel) / ((i + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Win/tie/loss triple over per-task deltas at a strict threshold: a delta
/// exactly at the threshold counts as a tie.
pub fn wtl(per_task_deltas: &[f64], threshold: f64) -> (usize, usize, usize) {
    let mut wins = 0;
    let mut ties = 0;
    let mut losses = 0;
    for d in per_task_deltas {
        if *d > threshold {
            wins += 1;
        } else if *d < -threshold {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    (wins, ties, losses)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledStats {
    pub median: f64,
    pub win_rate: f64,
}

/// Median and win-rate over pooled per-cell deltas. An even cell count
/// averages the two middle values; a win is a delta strictly above the
/// threshold.
pub fn pooled_stats(cells: &[f64], threshold: f64) -> PooledStats {
    debug_assert!(!cells.is_empty());
    let median = crate::fusion::median(cells);
    let wins = cells.iter().filter(|d| **d > threshold).count();
    PooledStats {
        median,
        win_rate: wins as f64 / cells.len() as f64,
    }
}

/// Two-sided paired bootstrap over per-query deltas. Resamples query indices
/// with replacement `resamples` times with a counter-based generator, counts
/// resampled means falling on the opposite side of zero from the observed
/// mean, doubles, and clamps to `[1/resamples, 1]`. An observed mean of
/// exactly zero reports p = 1.
pub fn paired_bootstrap(deltas: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if deltas.is_empty() {
        return Err(Error::EmptyDeltas);
    }
    let n = deltas.len();
    let observed = deltas.iter().sum::<f64>() / n as f64;
    if observed == 0.0 {
        return Ok(1.0);
    }
    let sign = observed.signum();
    let mut opposite = 0usize;
    for r in 0..resamples {
        // Resample r draws from its own stream, so the count is independent
        // of any parallel schedule.
        let mut g = SplitMix64::from_stream(seed, r as u64);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += deltas[g.next_below(n)];
        }
        if sum / n as f64 * sign <= 0.0 {
            opposite += 1;
        }
    }
    let p = 2.0 * opposite as f64 / resamples as f64;
    Ok(p.clamp(1.0 / resamples as f64, 1.0))
}

/// One candidate in the cost/quality plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub id: String,
    pub cost: f64,
    pub delta: f64,
}

/// Non-dominated subset: a point is kept iff no other point is at most as
/// costly and at least as good with one comparison strict. Exact duplicates
/// are all retained. Output sorted by cost, then delta, then id.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut kept: Vec<ParetoPoint> = points
        .iter()
        .filter(|p| {
            !points.iter().any(|q| {
                q.cost <= p.cost && q.delta >= p.delta && (q.cost < p.cost || q.delta > p.delta)
            })
        })
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                a.delta
                    .partial_cmp(&b.delta)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(a.id.cmp(&b.id))
    });
    kept
}

/// Running-best admission: a candidate enters the frontier iff its mean
/// delta is positive and strictly exceeds every previously admitted mean.
pub fn frontier_admission(admitted_means: &[f64], candidate_mean: f64) -> bool {
    candidate_mean > 0.0
        && admitted_means
            .iter()
            .all(|prev| candidate_mean > *prev)
}

/// Per-task outcome of one program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskEval {
    pub task_id: String,
    pub mean_ndcg: f64,
    pub baseline_mean_ndcg: f64,
    pub mean_delta: f64,
    pub per_query_deltas: Vec<f64>,
}

/// Evaluation of one program across a task set.
#[derive(Debug, Clone, Serialize)]
pub struct ProgramEvaluation {
    pub program_id: String,
    pub per_task: Vec<TaskEval>,
    pub wtl: (usize, usize, usize),
    pub cost: f64,
    pub cost_amortized: f64,
    pub phases: BTreeMap<&'static str, u64>,
}

impl ProgramEvaluation {
    pub fn mean_delta(&self) -> f64 {
        if self.per_task.is_empty() {
            return 0.0;
        }
        self.per_task.iter().map(|t| t.mean_delta).sum::<f64>() / self.per_task.len() as f64
    }

    pub fn pooled_query_deltas(&self) -> Vec<f64> {
        self.per_task
            .iter()
            .flat_map(|t| t.per_query_deltas.iter().copied())
            .collect()
    }

    pub fn per_task_delta_map(&self) -> BTreeMap<String, f64> {
        self.per_task
            .iter()
            .map(|t| (t.task_id.clone(), t.mean_delta))
            .collect()
    }
}

/// Per-query nDCG@10 for every query of a task under a score matrix.
pub fn per_query_ndcg(
    task: &Task,
    scores: &crate::embed::ScoreMatrix,
    gain: GainVariant,
) -> Vec<f64> {
    let doc_ids = task.doc_ids();
    let grouped = task.grades_by_query();
    let empty = BTreeMap::new();
    task.query_ids()
        .iter()
        .enumerate()
        .map(|(qi, qid)| {
            let ranking = ranks_from_scores(scores.row(qi));
            let order: Vec<&str> = ranking.order.iter().map(|&d| doc_ids[d]).collect();
            let grades = grouped.get(qid).unwrap_or(&empty);
            ndcg_at_k(&order, grades, 10, gain)
        })
        .collect()
}

/// Run one program against the baseline on every task. Tasks evaluate in
/// parallel; reductions are index-ordered so the result is identical at any
/// thread count.
pub fn evaluate_program(
    program: &RegisteredProgram,
    tasks: &[Task],
    provider: &EncoderProvider,
    head: Option<&HeadParams>,
    gain: GainVariant,
) -> Result<ProgramEvaluation> {
    let meter = CostMeter::new();
    let per_task: Result<Vec<TaskEval>> = tasks
        .par_iter()
        .map(|task| {
            let data = TaskData::build(task, provider, &meter, head)?;
            let baseline_ndcg = per_query_ndcg(task, &data.baseline, gain);
            let ctx = data.context(provider, &meter);
            let s_prime = program.run(&ctx)?;
            let program_ndcg = per_query_ndcg(task, &s_prime, gain);
            let per_query_deltas: Vec<f64> = program_ndcg
                .iter()
                .zip(&baseline_ndcg)
                .map(|(p, b)| p - b)
                .collect();
            let nq = per_query_deltas.len().max(1) as f64;
            Ok(TaskEval {
                task_id: task.task_id.clone(),
                mean_ndcg: program_ndcg.iter().sum::<f64>() / nq,
                baseline_mean_ndcg: baseline_ndcg.iter().sum::<f64>() / nq,
                mean_delta: per_query_deltas.iter().sum::<f64>() / nq,
                per_query_deltas,
            })
        })
        .collect();
    let per_task = per_task?;
    let deltas: Vec<f64> = per_task.iter().map(|t| t.mean_delta).collect();
    Ok(ProgramEvaluation {
        program_id: program.spec.id.clone(),
        wtl: wtl(&deltas, WTL_THRESHOLD),
        cost: meter.cost_ratio()?,
        cost_amortized: meter.amortized_cost_ratio()?,
        phases: meter.per_phase(),
        per_task,
    })
}

/// One line of the JSON-lines evaluation report.
#[derive(Debug, Serialize)]
struct ReportRow<'a> {
    program: &'a str,
    task: &'a str,
    mean_ndcg: f64,
    baseline_mean_ndcg: f64,
    mean_delta: f64,
    wtl_class: &'a str,
    c_logical: f64,
    c_amortized: f64,
    phases: &'a BTreeMap<&'static str, u64>,
    config_hash: &'a str,
    seed: u64,
}

/// Write the per-(program, task) report.
pub fn write_report_jsonl(
    path: &Path,
    evals: &[ProgramEvaluation],
    config_hash: &str,
    seed: u64,
) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for eval in evals {
        for task in &eval.per_task {
            let class = if task.mean_delta > WTL_THRESHOLD {
                "win"
            } else if task.mean_delta < -WTL_THRESHOLD {
                "loss"
            } else {
                "tie"
            };
            let row = ReportRow {
                program: &eval.program_id,
                task: &task.task_id,
                mean_ndcg: task.mean_ndcg,
                baseline_mean_ndcg: task.baseline_mean_ndcg,
                mean_delta: task.mean_delta,
                wtl_class: class,
                c_logical: eval.cost,
                c_amortized: eval.cost_amortized,
                phases: &eval.phases,
                config_hash,
                seed,
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Write the summary CSV: one row per program, suitable for external
/// frontier plotting.
pub fn write_summary_csv(
    path: &Path,
    evals: &[ProgramEvaluation],
    bootstrap_seed: u64,
    config_hash: &str,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_hash={config_hash} seed={bootstrap_seed}\n"));
    out.push_str(
        "program,c_logical,c_amortized,mean_delta,median_delta,win_rate,p_value,wins,ties,losses\n",
    );
    for eval in evals {
        let task_deltas: Vec<f64> = eval.per_task.iter().map(|t| t.mean_delta).collect();
        let stats = pooled_stats(&task_deltas, WTL_THRESHOLD);
        let query_deltas = eval.pooled_query_deltas();
        let p = paired_bootstrap(&query_deltas, BOOTSTRAP_RESAMPLES, bootstrap_seed)?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            eval.program_id,
            eval.cost,
            eval.cost_amortized,
            eval.mean_delta(),
            stats.median,
            stats.win_rate,
            p,
            eval.wtl.0,
            eval.wtl.1,
            eval.wtl.2,
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a summary CSV back into Pareto points (`frontier` subcommand input).
pub fn read_summary_points(path: &Path) -> Result<Vec<ParetoPoint>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("program,") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: "expected program,c_logical,c_amortized,mean_delta,...".into(),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("bad number {s:?}: {e}"),
            })
        };
        points.push(ParetoPoint {
            id: fields[0].to_string(),
            cost: parse(fields[1])?,
            delta: parse(fields[3])?,
        });
    }
    Ok(points)
}

/// TREC-style run lines: `qid Q0 docid rank score tag`.
pub fn write_trec_run(
    path: &Path,
    task: &Task,
    scores: &crate::embed::ScoreMatrix,
    tag: &str,
) -> Result<()> {
    let doc_ids = task.doc_ids();
    let mut out = String::new();
    for (qi, qid) in task.query_ids().iter().enumerate() {
        let ranking = ranks_from_scores(scores.row(qi));
        for (rank, &d) in ranking.order.iter().enumerate() {
            out.push_str(&format!(
                "{qid} Q0 {} {} {} {tag}\n",
                doc_ids[d],
                rank + 1,
                scores.row(qi)[d],
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
