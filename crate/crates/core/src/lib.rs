//! Test-time-compute reranking for frozen embedding models.
//!
//! A second-stage reranker takes a shortlist of candidate documents, the
//! query/document embeddings from a frozen encoder, and the baseline cosine
//! score matrix, and spends extra inference compute to produce a better score
//! matrix. This crate provides:
//!
//! - the dense linear algebra shared by every reranking program ([`embed`]),
//! - a pluggable encoder provider with cost metering, Matryoshka truncation,
//!   a deterministic synthetic backend, a file cache, and an HTTP client
//!   ([`encoder`]),
//! - encoder-free lexical channels and text segmentation ([`text`]),
//! - rank fusion: RRF, z-norm fusion, MaxSim/TopMean aggregation ([`fusion`]),
//! - a registry of reranking programs spanning cost ratios from 1x to ~15x,
//!   plus centroid-feedback and BM25-hybrid baselines ([`programs`]),
//! - an evaluation harness: nDCG@10, per-task deltas, win/tie/loss counts,
//!   pooled statistics, paired bootstrap, Pareto-frontier extraction
//!   ([`eval`], [`task`]),
//! - a declarative pipeline DSL so machine-proposed programs are parseable
//!   text rather than executable code ([`dsl`]),
//! - a generation loop with a proposer port and a hash-chained ledger
//!   ([`search`]),
//! - matched-budget learned projection heads over frozen embeddings with
//!   analytic InfoNCE gradients ([`head`]),
//! - deterministic synthetic benchmark generation ([`fixtures`]).
//!
//! Every operation is deterministic: the same inputs, seed, and thread count
//! produce bit-identical outputs.

pub mod dsl;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod fusion;
pub mod head;
pub mod programs;
pub mod rng;
pub mod search;
pub mod task;
pub mod text;

pub use embed::{EmbeddingMatrix, ScoreMatrix};
pub use encoder::{Adapter, CostMeter, EncodeRequest, EncoderProvider, Phase, ProviderConfig};
pub use error::{Error, Result};
pub use programs::{Constants, ProgramContext, ProgramSpec};
pub use task::Task;
pub use text::TokenStats;
