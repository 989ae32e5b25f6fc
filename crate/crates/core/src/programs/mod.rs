//! The program registry: deterministic maps `(Q, D, S, ctx) -> S'` that
//! spend extra encoder calls (or none) to rescore a shortlist.
//!
//! Programs share a global guard: on a single-document shortlist every
//! program returns `S` unchanged, because medians, quartiles, and splits are
//! undefined at n = 1. All tuning constants are task-universal, frozen in
//! one [`Constants`] record, and serialized into every ledger row.

mod classic;
mod frontier;

pub use classic::{
    classical_rocchio, soft_centroid, vanilla_bm25_dense_rrf, ROCCHIO_GRID_BETA, ROCCHIO_GRID_K,
};
pub use frontier::*;

use serde::{Deserialize, Serialize};

use crate::embed::{centroid_rows, cosine_scores, dot, l2_normalize, EmbeddingMatrix, ScoreMatrix};
use crate::encoder::{Adapter, CostMeter, EncodeRequest, EncoderProvider, Phase};
use crate::error::Result;
use crate::fusion::{median, ranks_from_scores, Ranking};
use crate::head::HeadParams;
use crate::task::Task;
use crate::text::{
    sentence_pairs, split_paragraphs, split_sentences, tokenize, TokenStats,
};

/// Global fixed parameters shared by every program. Identical across tasks
/// within one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Additive RRF constant. The fused formula is `sum 1/(k + rank)`; the
    /// programs run at 0, with the classical 60 available for sensitivity.
    pub rrf_k: f64,
    /// Zero-variance guard for z-scores.
    pub zscore_eps: f64,
    /// Sentence chunks kept per document (leading sentences).
    pub max_sentences_per_doc: usize,
    /// Paragraph chunks kept per document.
    pub max_paragraphs_per_doc: usize,
    /// Input-length control for the topic channel.
    pub topic_max_tokens: usize,
    /// Residual-round fallback threshold on the unnormalized residual norm.
    pub residual_fallback_norm: f64,
    pub soft_centroid_k: usize,
    pub soft_centroid_alpha: f64,
    pub soft_centroid_tau: f64,
    /// Default cell of the classical feedback grid.
    pub rocchio_k: usize,
    pub rocchio_beta: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    /// Minimum size of a top/bottom quarter selection.
    pub min_group: usize,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            rrf_k: 0.0,
            zscore_eps: 1e-8,
            max_sentences_per_doc: 8,
            max_paragraphs_per_doc: 3,
            topic_max_tokens: 128,
            residual_fallback_norm: 0.1,
            soft_centroid_k: 3,
            soft_centroid_alpha: 0.5,
            soft_centroid_tau: 0.05,
            rocchio_k: 3,
            rocchio_beta: 0.5,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            min_group: 2,
        }
    }
}

/// Structural family of a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Geometric,
    Granularity,
    LexicalHybrid,
    Expansion,
    Algebraic,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Geometric => "geometric",
            Family::Granularity => "granularity",
            Family::LexicalHybrid => "lexical-hybrid",
            Family::Expansion => "expansion",
            Family::Algebraic => "algebraic",
        }
    }
}

/// Registry metadata for one program.
#[derive(Debug, Clone, Serialize)]
pub struct ProgramSpec {
    pub id: String,
    /// Reference cost ratio on the standard 14-task size profile.
    pub nominal_cost: f64,
    pub family: Family,
    pub requires_adapters: bool,
}

/// Everything a program may read for one task. Borrowed from [`TaskData`];
/// programs are pure given this context.
pub struct ProgramContext<'a> {
    pub queries: &'a EmbeddingMatrix,
    pub docs: &'a EmbeddingMatrix,
    pub baseline: &'a ScoreMatrix,
    pub query_texts: &'a [String],
    pub doc_texts: &'a [String],
    pub query_tokens: &'a [Vec<String>],
    pub doc_tokens: &'a [Vec<String>],
    /// Distinct tokens per document, precomputed once: the lexical channels
    /// probe these per (query, doc) pair and long documents make rebuilding
    /// them quadratic.
    pub doc_token_sets: &'a [std::collections::BTreeSet<String>],
    /// Distinct word bigrams per document, joined with an unstorable
    /// separator byte.
    pub doc_bigram_sets: &'a [std::collections::BTreeSet<String>],
    pub token_stats: &'a TokenStats,
    pub constants: &'a Constants,
    pub encoder: EncoderHandle<'a>,
}

/// Meter-attached handle to the frozen encoder. When a head is active the
/// transform applies to every embedding the programs see, so scoring happens
/// entirely in the transformed space.
#[derive(Clone, Copy)]
pub struct EncoderHandle<'a> {
    provider: &'a EncoderProvider,
    meter: &'a CostMeter,
    head: Option<&'a HeadParams>,
}

impl<'a> EncoderHandle<'a> {
    pub fn new(
        provider: &'a EncoderProvider,
        meter: &'a CostMeter,
        head: Option<&'a HeadParams>,
    ) -> Self {
        EncoderHandle {
            provider,
            meter,
            head,
        }
    }

    pub fn has_adapters(&self) -> bool {
        self.provider.has_adapters()
    }

    pub fn encode(
        &self,
        texts: &[String],
        adapter: Adapter,
        phase: Phase,
    ) -> Result<EmbeddingMatrix> {
        self.encode_with(EncodeRequest::new(texts.to_vec(), adapter), phase)
    }

    pub fn encode_with(&self, req: EncodeRequest, phase: Phase) -> Result<EmbeddingMatrix> {
        let m = self.provider.encode(&req, self.meter, phase)?;
        match self.head {
            Some(head) => head.apply(&m),
            None => Ok(m),
        }
    }
}

/// Owned per-task state backing a [`ProgramContext`]. Building it performs
/// the single-pass baseline: all queries and documents encoded once.
pub struct TaskData {
    pub queries: EmbeddingMatrix,
    pub docs: EmbeddingMatrix,
    pub baseline: ScoreMatrix,
    pub query_texts: Vec<String>,
    pub doc_texts: Vec<String>,
    pub query_tokens: Vec<Vec<String>>,
    pub doc_tokens: Vec<Vec<String>>,
    pub doc_token_sets: Vec<std::collections::BTreeSet<String>>,
    pub doc_bigram_sets: Vec<std::collections::BTreeSet<String>>,
    pub token_stats: TokenStats,
    pub constants: Constants,
    head: Option<HeadParams>,
}

/// Bigram set key: the two tokens joined by a byte no token contains.
pub(crate) fn bigram_key(a: &str, b: &str) -> String {
    format!("{a}\u{1f}{b}")
}

impl TaskData {
    pub fn build(
        task: &Task,
        provider: &EncoderProvider,
        meter: &CostMeter,
        head: Option<&HeadParams>,
    ) -> Result<Self> {
        let query_texts: Vec<String> = task.queries.values().cloned().collect();
        let doc_texts: Vec<String> = task.corpus.values().cloned().collect();
        Self::from_texts(query_texts, doc_texts, provider, meter, head, Constants::default())
    }

    pub fn from_texts(
        query_texts: Vec<String>,
        doc_texts: Vec<String>,
        provider: &EncoderProvider,
        meter: &CostMeter,
        head: Option<&HeadParams>,
        constants: Constants,
    ) -> Result<Self> {
        let handle = EncoderHandle::new(provider, meter, head);
        let queries = handle.encode(&query_texts, Adapter::RetrievalQuery, Phase::Baseline)?;
        let docs = handle.encode(&doc_texts, Adapter::RetrievalPassage, Phase::Baseline)?;
        let baseline = cosine_scores(&queries, &docs)?;
        let query_tokens: Vec<Vec<String>> = query_texts.iter().map(|t| tokenize(t)).collect();
        let doc_tokens: Vec<Vec<String>> = doc_texts.iter().map(|t| tokenize(t)).collect();
        let doc_token_sets: Vec<std::collections::BTreeSet<String>> = doc_tokens
            .iter()
            .map(|tokens| tokens.iter().cloned().collect())
            .collect();
        let doc_bigram_sets: Vec<std::collections::BTreeSet<String>> = doc_tokens
            .iter()
            .map(|tokens| {
                tokens
                    .windows(2)
                    .map(|w| bigram_key(&w[0], &w[1]))
                    .collect()
            })
            .collect();
        let token_stats = TokenStats::build(&doc_tokens);
        Ok(TaskData {
            queries,
            docs,
            baseline,
            query_texts,
            doc_texts,
            query_tokens,
            doc_tokens,
            doc_token_sets,
            doc_bigram_sets,
            token_stats,
            constants,
            head: head.cloned(),
        })
    }

    pub fn context<'a>(
        &'a self,
        provider: &'a EncoderProvider,
        meter: &'a CostMeter,
    ) -> ProgramContext<'a> {
        ProgramContext {
            queries: &self.queries,
            docs: &self.docs,
            baseline: &self.baseline,
            query_texts: &self.query_texts,
            doc_texts: &self.doc_texts,
            query_tokens: &self.query_tokens,
            doc_tokens: &self.doc_tokens,
            doc_token_sets: &self.doc_token_sets,
            doc_bigram_sets: &self.doc_bigram_sets,
            token_stats: &self.token_stats,
            constants: &self.constants,
            encoder: EncoderHandle::new(provider, meter, self.head.as_ref()),
        }
    }
}

type NativeFn = fn(&ProgramContext) -> Result<ScoreMatrix>;

enum Runner {
    Native(NativeFn),
    Compiled(crate::dsl::CompiledPipeline),
}

/// A runnable registry entry: metadata plus either a native implementation
/// or a compiled pipeline.
pub struct RegisteredProgram {
    pub spec: ProgramSpec,
    runner: Runner,
}

impl RegisteredProgram {
    pub fn native(
        id: &str,
        nominal_cost: f64,
        family: Family,
        requires_adapters: bool,
        f: NativeFn,
    ) -> Self {
        RegisteredProgram {
            spec: ProgramSpec {
                id: id.to_string(),
                nominal_cost,
                family,
                requires_adapters,
            },
            runner: Runner::Native(f),
        }
    }

    pub fn compiled(id: &str, pipeline: crate::dsl::CompiledPipeline) -> Self {
        RegisteredProgram {
            spec: ProgramSpec {
                id: id.to_string(),
                nominal_cost: 0.0,
                family: Family::Expansion,
                requires_adapters: false,
            },
            runner: Runner::Compiled(pipeline),
        }
    }

    /// Run with the global degenerate guard: a single-document shortlist
    /// returns the baseline unchanged.
    pub fn run(&self, ctx: &ProgramContext) -> Result<ScoreMatrix> {
        if ctx.docs.rows() <= 1 {
            return Ok(ctx.baseline.clone());
        }
        match &self.runner {
            Runner::Native(f) => f(ctx),
            Runner::Compiled(pipeline) => pipeline.run(ctx),
        }
    }
}

/// All registered programs: the trivial baseline, the twelve frontier
/// programs in ascending nominal cost, and the feedback/hybrid controls.
pub fn registry() -> Vec<RegisteredProgram> {
    use Family::*;
    vec![
        RegisteredProgram::native("p0", 1.0, Geometric, false, frontier::p0_baseline),
        RegisteredProgram::native("bidir_zscore", 1.2, Geometric, true, frontier::bidir_zscore),
        RegisteredProgram::native("sent_maxsim", 2.2, Granularity, false, frontier::sent_maxsim),
        RegisteredProgram::native(
            "adapt_granularity",
            2.7,
            Granularity,
            false,
            frontier::adapt_granularity,
        ),
        RegisteredProgram::native(
            "coverage_triple",
            3.7,
            Granularity,
            false,
            frontier::coverage_triple,
        ),
        RegisteredProgram::native(
            "lex_hybrid_rrf",
            3.9,
            LexicalHybrid,
            false,
            frontier::lex_hybrid_rrf,
        ),
        RegisteredProgram::native(
            "cross_round_rrf",
            3.9,
            LexicalHybrid,
            false,
            frontier::cross_round_rrf,
        ),
        RegisteredProgram::native(
            "diverse_dual_ctx",
            5.6,
            Expansion,
            false,
            frontier::diverse_dual_ctx,
        ),
        RegisteredProgram::native(
            "consensus_rocchio",
            6.4,
            Expansion,
            true,
            frontier::consensus_rocchio,
        ),
        RegisteredProgram::native(
            "neg_contrastive",
            7.2,
            Expansion,
            false,
            frontier::neg_contrastive,
        ),
        RegisteredProgram::native("momentum", 9.8, Expansion, true, frontier::momentum_prog),
        RegisteredProgram::native(
            "graph_centrality",
            12.2,
            Expansion,
            true,
            frontier::graph_centrality,
        ),
        RegisteredProgram::native(
            "fisher_stability",
            14.7,
            Algebraic,
            true,
            frontier::fisher_stability,
        ),
        RegisteredProgram::native(
            "soft_centroid",
            1.0,
            Geometric,
            false,
            classic::soft_centroid_default,
        ),
        RegisteredProgram::native(
            "classical_rocchio",
            1.0,
            Geometric,
            false,
            classic::classical_rocchio_default,
        ),
        RegisteredProgram::native(
            "vanilla_bm25_dense_rrf",
            1.0,
            LexicalHybrid,
            false,
            classic::vanilla_bm25_dense_rrf,
        ),
    ]
}

/// Ids of the baseline plus the twelve frontier programs, ascending cost.
pub fn frontier_ids() -> Vec<&'static str> {
    vec![
        "p0",
        "bidir_zscore",
        "sent_maxsim",
        "adapt_granularity",
        "coverage_triple",
        "lex_hybrid_rrf",
        "cross_round_rrf",
        "diverse_dual_ctx",
        "consensus_rocchio",
        "neg_contrastive",
        "momentum",
        "graph_centrality",
        "fisher_stability",
    ]
}

pub fn find_program(id: &str) -> Option<RegisteredProgram> {
    registry().into_iter().find(|p| p.spec.id == id)
}

/// The exact channel list the stability program fuses, exported into the
/// ledger so the enumeration is auditable.
pub fn fisher_channel_list(has_adapters: bool) -> Vec<String> {
    let mut channels: Vec<String> = vec![
        "dense".into(),
        "sent_maxsim".into(),
        "idf_overlap".into(),
        "bigram_overlap".into(),
        "coverage_ratio".into(),
        "rare_term".into(),
        "round1_rrf".into(),
        "rocchio_feedback".into(),
        "query_residual".into(),
    ];
    let adapters: &[Adapter] = if has_adapters {
        &Adapter::ALL
    } else {
        &[Adapter::RetrievalQuery]
    };
    for a in adapters {
        channels.push(format!("expand_pos[{}]", a.as_str()));
        channels.push(format!("expand_contrast[{}]", a.as_str()));
    }
    channels.push("bidir_docs_zscore".into());
    channels.push("bidir_queries_zscore".into());
    channels.push("fisher_direction".into());
    channels.push("rank_stability".into());
    channels
}

// ---------------------------------------------------------------------------
// Shared helpers for program implementations (also reused by the DSL
// compiler, which must stay bit-compatible with the natives).
// ---------------------------------------------------------------------------

/// Chunked view of the corpus at one granularity.
pub(crate) struct ChunkSet {
    pub chunks: Vec<String>,
    /// Chunk row -> owning document.
    pub owner: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Granularity {
    Sentence,
    Pair,
    Paragraph,
}

impl ChunkSet {
    pub fn build(doc_texts: &[String], granularity: Granularity, constants: &Constants) -> Self {
        let mut chunks = Vec::new();
        let mut owner = Vec::new();
        for (d, text) in doc_texts.iter().enumerate() {
            let mut doc_chunks = match granularity {
                Granularity::Sentence => {
                    let mut s = split_sentences(text);
                    s.truncate(constants.max_sentences_per_doc);
                    s
                }
                Granularity::Pair => {
                    let mut s = split_sentences(text);
                    s.truncate(constants.max_sentences_per_doc);
                    sentence_pairs(&s)
                }
                Granularity::Paragraph => {
                    let mut p = split_paragraphs(text);
                    p.truncate(constants.max_paragraphs_per_doc);
                    p
                }
            };
            if doc_chunks.is_empty() {
                // Every doc owns at least one chunk; empty docs chunk to the
                // empty string, which embeds to the zero sentinel.
                doc_chunks.push(text.clone());
            }
            for c in doc_chunks {
                chunks.push(c);
                owner.push(d);
            }
        }
        ChunkSet { chunks, owner }
    }

    pub fn encode(
        &self,
        ctx: &ProgramContext,
        adapter: Adapter,
        phase: Phase,
    ) -> Result<EmbeddingMatrix> {
        ctx.encoder.encode(&self.chunks, adapter, phase)
    }
}

/// Sentence chunks under the passage adapter, encoded once at index time.
/// The artifact behind every MaxSim and best-sentence lookup.
pub(crate) fn sentence_artifact(ctx: &ProgramContext) -> Result<(ChunkSet, EmbeddingMatrix)> {
    let set = ChunkSet::build(ctx.doc_texts, Granularity::Sentence, ctx.constants);
    let embs = set.encode(ctx, Adapter::RetrievalPassage, Phase::IndexTime)?;
    Ok((set, embs))
}

/// Best-matching sentence of a document for one query: argmax sentence
/// cosine, ties to the earliest sentence.
pub(crate) fn best_sentence<'s>(
    query_row: &[f64],
    doc: usize,
    set: &'s ChunkSet,
    embs: &EmbeddingMatrix,
) -> &'s str {
    let mut best: Option<(f64, usize)> = None;
    for (c, chunk_row) in embs.iter_rows().enumerate() {
        if set.owner[c] != doc {
            continue;
        }
        let sim = dot(query_row, chunk_row);
        let better = match best {
            None => true,
            Some((b, _)) => sim > b,
        };
        if better {
            best = Some((sim, c));
        }
    }
    let (_, idx) = best.expect("every doc owns at least one chunk");
    &set.chunks[idx]
}

/// First `ceil(n/4)` docs of an order, at least `min_group`, at most n.
pub(crate) fn top_quarter(order: &[usize], min_group: usize) -> Vec<usize> {
    let n = order.len();
    let k = (n.div_ceil(4)).max(min_group).min(n);
    order[..k].to_vec()
}

/// Last `ceil(n/4)` docs, symmetric to [`top_quarter`].
pub(crate) fn bottom_quarter(order: &[usize], min_group: usize) -> Vec<usize> {
    let n = order.len();
    let k = (n.div_ceil(4)).max(min_group).min(n);
    order[n - k..].to_vec()
}

/// First `ceil(n/2)` docs of an order.
pub(crate) fn top_half(order: &[usize]) -> Vec<usize> {
    let n = order.len();
    order[..n.div_ceil(2)].to_vec()
}

/// Last `floor(n/2)` docs of an order.
pub(crate) fn bottom_half(order: &[usize]) -> Vec<usize> {
    let n = order.len();
    order[n - n / 2..].to_vec()
}

/// Split doc indices by the per-query median of `scores`: strictly above
/// goes positive, the rest negative.
pub(crate) fn median_split(scores: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let m = median(scores);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (d, s) in scores.iter().enumerate() {
        if *s > m {
            pos.push(d);
        } else {
            neg.push(d);
        }
    }
    (pos, neg)
}

/// `normalize(q + c_pos - c_neg)`; `None` when the update cancels to zero.
pub(crate) fn rocchio_query(q: &[f64], c_pos: &[f64], c_neg: &[f64]) -> Option<Vec<f64>> {
    let moved: Vec<f64> = q
        .iter()
        .zip(c_pos.iter().zip(c_neg))
        .map(|(qi, (p, m))| qi + p - m)
        .collect();
    match l2_normalize(&moved) {
        Ok((unit, false)) => Some(unit),
        _ => None,
    }
}

/// Cosine of one query vector against every doc row.
pub(crate) fn score_against_docs(q: &[f64], docs: &EmbeddingMatrix) -> Vec<f64> {
    docs.iter_rows().map(|d| dot(q, d)).collect()
}

/// Per-document lexical channel rows computed against the precomputed doc
/// token/bigram sets. Arithmetic matches the reference operations in
/// [`crate::text`] exactly; only the set construction is hoisted.
pub(crate) fn idf_overlap_row(ctx: &ProgramContext, qi: usize) -> Vec<f64> {
    let q_set: std::collections::BTreeSet<&str> =
        ctx.query_tokens[qi].iter().map(|t| t.as_str()).collect();
    (0..ctx.docs.rows())
        .map(|d| {
            let d_set = &ctx.doc_token_sets[d];
            let mut matched = 0.0;
            let mut total = 0.0;
            for t in &q_set {
                let w = ctx.token_stats.idf(t);
                total += w;
                if d_set.contains(*t) {
                    matched += w;
                }
            }
            matched / (total + 1e-9)
        })
        .collect()
}

pub(crate) fn bigram_overlap_row(ctx: &ProgramContext, qi: usize) -> Vec<f64> {
    let q_bigrams: std::collections::BTreeSet<String> = ctx.query_tokens[qi]
        .windows(2)
        .map(|w| bigram_key(&w[0], &w[1]))
        .collect();
    (0..ctx.docs.rows())
        .map(|d| {
            if q_bigrams.is_empty() {
                return 0.0;
            }
            let hits = q_bigrams
                .iter()
                .filter(|b| ctx.doc_bigram_sets[d].contains(*b))
                .count();
            hits as f64 / (q_bigrams.len() as f64 + 1e-9)
        })
        .collect()
}

pub(crate) fn coverage_ratio_row(ctx: &ProgramContext, qi: usize) -> Vec<f64> {
    let q_set: std::collections::BTreeSet<&str> =
        ctx.query_tokens[qi].iter().map(|t| t.as_str()).collect();
    (0..ctx.docs.rows())
        .map(|d| {
            if q_set.is_empty() {
                return 0.0;
            }
            let hits = q_set
                .iter()
                .filter(|t| ctx.doc_token_sets[d].contains(**t))
                .count();
            hits as f64 / q_set.len() as f64
        })
        .collect()
}

pub(crate) fn rare_term_row(ctx: &ProgramContext, qi: usize) -> Vec<f64> {
    let q_set: std::collections::BTreeSet<&str> =
        ctx.query_tokens[qi].iter().map(|t| t.as_str()).collect();
    (0..ctx.docs.rows())
        .map(|d| {
            q_set
                .iter()
                .filter(|t| ctx.doc_token_sets[d].contains(**t))
                .map(|t| ctx.token_stats.idf(t))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Rankings for a channel list, in channel order.
pub(crate) fn rank_all(channels: &[Vec<f64>]) -> Vec<Ranking> {
    channels.iter().map(|c| ranks_from_scores(c)).collect()
}
