//! Retrieval task ingestion: JSON-lines corpus and queries plus tab-separated
//! graded relevance judgments, following the common three-file benchmark
//! layout.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// One retrieval task: corpus texts, query texts, and graded judgments.
/// Iteration order over ids is deterministic (lexicographic).
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub task_id: String,
    pub queries: BTreeMap<String, String>,
    pub corpus: BTreeMap<String, String>,
    /// (query_id, doc_id) -> relevance grade >= 0.
    pub qrels: BTreeMap<(String, String), u32>,
}

impl Task {
    /// Validate id resolution and that at least one query has a
    /// positive-grade document.
    pub fn validate(&self) -> Result<()> {
        let mut dangling: Vec<String> = Vec::new();
        for (q, d) in self.qrels.keys() {
            if !self.queries.contains_key(q) {
                dangling.push(q.clone());
            }
            if !self.corpus.contains_key(d) {
                dangling.push(d.clone());
            }
        }
        if !dangling.is_empty() {
            dangling.sort();
            dangling.dedup();
            return Err(Error::DanglingIds { ids: dangling });
        }
        if !self.qrels.iter().any(|(_, grade)| *grade > 0) {
            return Err(Error::InvalidTask(format!(
                "task {} has no positive-grade judgment",
                self.task_id
            )));
        }
        Ok(())
    }

    /// Query ids in deterministic order.
    pub fn query_ids(&self) -> Vec<&str> {
        self.queries.keys().map(|s| s.as_str()).collect()
    }

    /// Doc ids in deterministic order.
    pub fn doc_ids(&self) -> Vec<&str> {
        self.corpus.keys().map(|s| s.as_str()).collect()
    }

    /// Grades for one query keyed by doc id.
    pub fn grades_for(&self, query_id: &str) -> BTreeMap<&str, u32> {
        self.qrels
            .iter()
            .filter(|((q, _), _)| q == query_id)
            .map(|((_, d), grade)| (d.as_str(), *grade))
            .collect()
    }

    /// All judgments grouped by query, built in one pass for evaluation
    /// loops over large query sets.
    pub fn grades_by_query(&self) -> BTreeMap<&str, BTreeMap<&str, u32>> {
        let mut grouped: BTreeMap<&str, BTreeMap<&str, u32>> = BTreeMap::new();
        for ((q, d), grade) in &self.qrels {
            grouped
                .entry(q.as_str())
                .or_default()
                .insert(d.as_str(), *grade);
        }
        grouped
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    #[serde(rename = "_id")]
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
}

fn read_jsonl(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        let text = if record.title.is_empty() {
            record.text
        } else if record.text.is_empty() {
            record.title
        } else {
            format!("{} {}", record.title, record.text)
        };
        out.insert(record.id, text);
    }
    Ok(out)
}

fn read_qrels(path: &Path) -> Result<BTreeMap<(String, String), u32>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        // (query_id, iteration-or-blank, doc_id, grade) or the three-column
        // form without the iteration.
        let (qid, did, grade_str) = match fields.len() {
            4 => (fields[0], fields[2], fields[3]),
            3 => (fields[0], fields[1], fields[2]),
            n => {
                return Err(Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected 3 or 4 tab-separated fields, got {n}"),
                });
            }
        };
        match grade_str.parse::<u32>() {
            Ok(grade) => {
                out.insert((qid.to_string(), did.to_string()), grade);
            }
            Err(_) if lineno == 0 => {
                // Header row tolerated.
                continue;
            }
            Err(e) => {
                return Err(Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("bad grade {grade_str:?}: {e}"),
                });
            }
        }
    }
    Ok(out)
}

/// Load a task from `corpus.jsonl`, `queries.jsonl`, and `qrels.tsv`.
pub fn load_task(
    task_id: &str,
    corpus_path: &Path,
    queries_path: &Path,
    qrels_path: &Path,
) -> Result<Task> {
    let task = Task {
        task_id: task_id.to_string(),
        corpus: read_jsonl(corpus_path)?,
        queries: read_jsonl(queries_path)?,
        qrels: read_qrels(qrels_path)?,
    };
    task.validate()?;
    Ok(task)
}

/// Load a task directory holding the three conventional files; the directory
/// name becomes the task id.
pub fn load_task_dir(dir: &Path) -> Result<Task> {
    let task_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".to_string());
    load_task(
        &task_id,
        &dir.join("corpus.jsonl"),
        &dir.join("queries.jsonl"),
        &dir.join("qrels.tsv"),
    )
}

/// Write a task in the three-file layout load_task expects.
pub fn write_task_dir(task: &Task, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut corpus = String::new();
    for (id, text) in &task.corpus {
        corpus.push_str(&serde_json::to_string(
            &serde_json::json!({"_id": id, "title": "", "text": text}),
        )?);
        corpus.push('\n');
    }
    let corpus_path = dir.join("corpus.jsonl");
    std::fs::write(&corpus_path, corpus).map_err(|e| Error::io(&corpus_path, e))?;

    let mut queries = String::new();
    for (id, text) in &task.queries {
        queries.push_str(&serde_json::to_string(
            &serde_json::json!({"_id": id, "text": text}),
        )?);
        queries.push('\n');
    }
    let queries_path = dir.join("queries.jsonl");
    std::fs::write(&queries_path, queries).map_err(|e| Error::io(&queries_path, e))?;

    let mut qrels = String::from("query-id\titeration\tcorpus-id\tscore\n");
    for ((q, d), grade) in &task.qrels {
        qrels.push_str(&format!("{q}\t0\t{d}\t{grade}\n"));
    }
    let qrels_path = dir.join("qrels.tsv");
    std::fs::write(&qrels_path, qrels).map_err(|e| Error::io(&qrels_path, e))?;
    Ok(())
}
