//! Cost metering. Each encoded text is one unit of test-time compute; the
//! meter tags every call with a phase so both the logical and the
//! index-amortized cost ratios can be reported.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Accounting phase for an encode call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    /// The single pass every evaluation starts from: all queries and all
    /// documents encoded once.
    Baseline,
    /// Extra per-query work a program does at retrieval time.
    QueryTime,
    /// Document-side re-encoding a deployment could fold into the index
    /// build.
    IndexTime,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Baseline => "baseline",
            Phase::QueryTime => "query-time",
            Phase::IndexTime => "index-time",
        }
    }
}

/// Monotone per-phase text counters. Thread-safe; counts never decrease.
#[derive(Debug, Default)]
pub struct CostMeter {
    baseline: AtomicU64,
    query_time: AtomicU64,
    index_time: AtomicU64,
}

impl CostMeter {
    pub fn new() -> Self {
        CostMeter::default()
    }

    pub fn add(&self, phase: Phase, texts: u64) {
        let counter = match phase {
            Phase::Baseline => &self.baseline,
            Phase::QueryTime => &self.query_time,
            Phase::IndexTime => &self.index_time,
        };
        counter.fetch_add(texts, Ordering::Relaxed);
    }

    /// Texts encoded by the single-pass baseline (T_base).
    pub fn baseline_texts(&self) -> u64 {
        self.baseline.load(Ordering::Relaxed)
    }

    /// Extra texts the program encoded (T_prog), across both program phases.
    pub fn program_texts(&self) -> u64 {
        self.query_time.load(Ordering::Relaxed) + self.index_time.load(Ordering::Relaxed)
    }

    pub fn per_phase(&self) -> BTreeMap<&'static str, u64> {
        BTreeMap::from([
            ("baseline", self.baseline.load(Ordering::Relaxed)),
            ("query-time", self.query_time.load(Ordering::Relaxed)),
            ("index-time", self.index_time.load(Ordering::Relaxed)),
        ])
    }

    /// Logical cost ratio `c = (T_base + T_prog) / T_base`. Counts every
    /// encode call, cached or not.
    pub fn cost_ratio(&self) -> Result<f64> {
        let base = self.baseline_texts();
        if base == 0 {
            return Err(Error::NoBaseline);
        }
        Ok((base + self.program_texts()) as f64 / base as f64)
    }

    /// Amortized ratio excluding the index-time phase: what a deployment
    /// pays per query once document-side re-encodes are folded into the
    /// index build.
    pub fn amortized_cost_ratio(&self) -> Result<f64> {
        let base = self.baseline_texts();
        if base == 0 {
            return Err(Error::NoBaseline);
        }
        Ok((base + self.query_time.load(Ordering::Relaxed)) as f64 / base as f64)
    }

    /// Snapshot for per-generation single-evaluation accounting.
    pub fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.baseline.load(Ordering::Relaxed),
            self.query_time.load(Ordering::Relaxed),
            self.index_time.load(Ordering::Relaxed),
        )
    }
}
