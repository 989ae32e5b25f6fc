//! Pipeline compiler: turns an AST into a runnable program with a static
//! cost prediction. Compiled primitives call the same helpers as the native
//! programs, so a pipeline spelling out a native program reproduces its
//! score matrix bit-exactly.

use std::collections::BTreeMap;

use super::{Decl, FuseOp, PipelineAst, Prim};
use crate::embed::{centroid_rows, l2_normalize, zscore_vec, EmbeddingMatrix, ScoreMatrix};
use crate::encoder::{Adapter, Phase};
use crate::error::{Error, Result};
use crate::fusion::{
    elementwise_max, maxsim, rank_variance, ranks_from_scores, rrf, top_mean_sim, ChannelScores,
};
use crate::programs::{
    best_sentence, bigram_overlap_row, bottom_quarter, coverage_ratio_row, feedback_round,
    idf_overlap_row, rank_all, rare_term_row, residual_round, score_against_docs,
    sentence_artifact, top_quarter, ChunkSet, Constants, Granularity, ProgramContext,
};

/// Task-shape counts the static cost model runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostInputs {
    pub n_queries: u64,
    pub n_docs: u64,
    pub sentence_chunks: u64,
    pub pair_chunks: u64,
    pub paragraph_chunks: u64,
}

impl CostInputs {
    /// Count chunks with the same chunkers the runtime uses, so predictions
    /// and the meter agree exactly.
    pub fn from_texts(n_queries: usize, doc_texts: &[String], constants: &Constants) -> Self {
        let count = |granularity| {
            ChunkSet::build(doc_texts, granularity, constants).chunks.len() as u64
        };
        CostInputs {
            n_queries: n_queries as u64,
            n_docs: doc_texts.len() as u64,
            sentence_chunks: count(Granularity::Sentence),
            pair_chunks: count(Granularity::Pair),
            paragraph_chunks: count(Granularity::Paragraph),
        }
    }
}

/// Artifact requirements planned from the AST.
#[derive(Debug, Default, Clone, Copy)]
struct Plan {
    sentences: bool,
    pairs: bool,
    paragraphs: bool,
    bidir: bool,
    expand_rounds: u64,
}

/// A parsed pipeline ready to run under the program contract.
#[derive(Debug, Clone)]
pub struct CompiledPipeline {
    ast: PipelineAst,
    plan: Plan,
}

impl CompiledPipeline {
    pub fn new(ast: PipelineAst) -> Self {
        let mut plan = Plan::default();
        for decl in &ast.decls {
            match decl {
                Decl::Channel(c) => match c.prim {
                    Prim::Maxsim | Prim::Topmean => {
                        match PipelineAst::granularity_of(&c.params) {
                            Granularity::Sentence => plan.sentences = true,
                            Granularity::Pair => plan.pairs = true,
                            Granularity::Paragraph => plan.paragraphs = true,
                        }
                    }
                    Prim::Bidir => plan.bidir = true,
                    _ => {}
                },
                Decl::Round(r) => {
                    if r.prim == Prim::Expand {
                        plan.sentences = true;
                        plan.expand_rounds += 1;
                    }
                }
            }
        }
        CompiledPipeline { ast, plan }
    }

    pub fn ast(&self) -> &PipelineAst {
        &self.ast
    }

    /// Extra encoder texts the pipeline will meter on a task of this shape:
    /// chunk batches are shared across channels and counted once.
    pub fn predicted_extra_texts(&self, inputs: &CostInputs) -> u64 {
        let mut total = 0;
        if self.plan.sentences {
            total += inputs.sentence_chunks;
        }
        if self.plan.pairs {
            total += inputs.pair_chunks;
        }
        if self.plan.paragraphs {
            total += inputs.paragraph_chunks;
        }
        if self.plan.bidir {
            total += inputs.n_docs;
        }
        total += self.plan.expand_rounds * inputs.n_queries;
        total
    }

    /// Predicted cost ratio against the single-pass baseline.
    pub fn predicted_cost_ratio(&self, inputs: &CostInputs) -> f64 {
        let base = inputs.n_queries + inputs.n_docs;
        (base + self.predicted_extra_texts(inputs)) as f64 / base as f64
    }

    pub fn run(&self, ctx: &ProgramContext) -> Result<ScoreMatrix> {
        if ctx.docs.rows() <= 1 {
            return Ok(ctx.baseline.clone());
        }
        let sentences = if self.plan.sentences {
            Some(sentence_artifact(ctx)?)
        } else {
            None
        };
        let pairs = if self.plan.pairs {
            let set = ChunkSet::build(ctx.doc_texts, Granularity::Pair, ctx.constants);
            let embs = set.encode(ctx, Adapter::RetrievalPassage, Phase::IndexTime)?;
            Some((set, embs))
        } else {
            None
        };
        let paragraphs = if self.plan.paragraphs {
            let set = ChunkSet::build(ctx.doc_texts, Granularity::Paragraph, ctx.constants);
            let embs = set.encode(ctx, Adapter::RetrievalPassage, Phase::IndexTime)?;
            Some((set, embs))
        } else {
            None
        };
        let bidir = if self.plan.bidir {
            Some(crate::programs::bidir_zscore(ctx)?)
        } else {
            None
        };

        let chunk_for = |granularity: Granularity| -> &(ChunkSet, EmbeddingMatrix) {
            match granularity {
                Granularity::Sentence => sentences.as_ref().expect("planned"),
                Granularity::Pair => pairs.as_ref().expect("planned"),
                Granularity::Paragraph => paragraphs.as_ref().expect("planned"),
            }
        };

        let n_docs = ctx.docs.rows();
        let k = ctx.constants.rrf_k;
        let mut rows = Vec::with_capacity(ctx.queries.rows());
        for qi in 0..ctx.queries.rows() {
            let q_row = ctx.queries.row(qi);
            let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();

            // A multi-input round fuses its inputs by RRF to form its base.
            let base_of = |args: &[String], values: &BTreeMap<&str, Vec<f64>>| -> Result<Vec<f64>> {
                let scores: Vec<Vec<f64>> =
                    args.iter().map(|a| values[a.as_str()].clone()).collect();
                if scores.len() == 1 {
                    Ok(scores.into_iter().next().expect("one input"))
                } else {
                    rrf(&rank_all(&scores), k)
                }
            };

            for decl in &self.ast.decls {
                let scores: Vec<f64> = match decl {
                    Decl::Channel(c) => match c.prim {
                        Prim::Dense => ctx.baseline.row(qi).to_vec(),
                        Prim::Maxsim => {
                            let (set, embs) = chunk_for(PipelineAst::granularity_of(&c.params));
                            maxsim(q_row, embs, &set.owner, n_docs)?
                        }
                        Prim::Topmean => {
                            let (set, embs) = chunk_for(PipelineAst::granularity_of(&c.params));
                            top_mean_sim(q_row, embs, &set.owner, n_docs)?
                        }
                        Prim::IdfOverlap => idf_overlap_row(ctx, qi),
                        Prim::Bigram => bigram_overlap_row(ctx, qi),
                        Prim::Coverage => coverage_ratio_row(ctx, qi),
                        Prim::RareTerm => rare_term_row(ctx, qi),
                        Prim::Bidir => bidir.as_ref().expect("planned").row(qi).to_vec(),
                        _ => unreachable!("validated as channel"),
                    },
                    Decl::Round(r) => {
                        let base = base_of(&r.args, &values)?;
                        match r.prim {
                            Prim::Rrf => base,
                            Prim::Zmax => {
                                let channels: Vec<ChannelScores> = r
                                    .args
                                    .iter()
                                    .map(|a| ChannelScores::new(a.clone(), values[a.as_str()].clone()))
                                    .collect();
                                elementwise_max(&channels, true, ctx.constants.zscore_eps)?
                            }
                            Prim::Zmean => zmean(
                                &r.args
                                    .iter()
                                    .map(|a| values[a.as_str()].clone())
                                    .collect::<Vec<_>>(),
                                ctx.constants.zscore_eps,
                            ),
                            Prim::Rocchio => feedback_round(ctx, qi, &base),
                            Prim::Residual => residual_round(ctx, qi, &base),
                            Prim::Expand => {
                                let (set, embs) =
                                    sentences.as_ref().expect("expand plans sentences");
                                let anchor = ranks_from_scores(&base).order[0];
                                let text = format!(
                                    "{} {}",
                                    ctx.query_texts[qi],
                                    best_sentence(q_row, anchor, set, embs)
                                );
                                let encoded = ctx.encoder.encode(
                                    &[text],
                                    Adapter::RetrievalQuery,
                                    Phase::QueryTime,
                                )?;
                                score_against_docs(encoded.row(0), ctx.docs)
                            }
                            Prim::Fisher => {
                                let order = ranks_from_scores(&base).order;
                                let top = top_quarter(&order, ctx.constants.min_group);
                                let bottom = bottom_quarter(&order, ctx.constants.min_group);
                                let c_top = centroid_rows(ctx.docs, &top)?;
                                let c_bot = centroid_rows(ctx.docs, &bottom)?;
                                let dir: Vec<f64> =
                                    c_top.iter().zip(&c_bot).map(|(t, b)| t - b).collect();
                                match l2_normalize(&dir)? {
                                    (w, false) => score_against_docs(&w, ctx.docs),
                                    // Degenerate separation: fall back to
                                    // the base scores.
                                    (_, true) => base,
                                }
                            }
                            Prim::Stability => {
                                let rankings = rank_all(
                                    &r.args
                                        .iter()
                                        .map(|a| values[a.as_str()].clone())
                                        .collect::<Vec<_>>(),
                                );
                                rank_variance(&rankings)?.iter().map(|v| -v).collect()
                            }
                            _ => unreachable!("validated as round"),
                        }
                    }
                };
                values.insert(decl.name(), scores);
            }

            let fused = if self.ast.fuse_args.len() == 1 {
                // Single-input fuse is the identity: raw scores pass through.
                values[self.ast.fuse_args[0].as_str()].clone()
            } else {
                let scores: Vec<Vec<f64>> = self
                    .ast
                    .fuse_args
                    .iter()
                    .map(|a| values[a.as_str()].clone())
                    .collect();
                match self.ast.fuse_op {
                    FuseOp::Rrf => rrf(&rank_all(&scores), k)?,
                    FuseOp::Zmax => {
                        let channels: Vec<ChannelScores> = self
                            .ast
                            .fuse_args
                            .iter()
                            .zip(&scores)
                            .map(|(a, s)| ChannelScores::new(a.clone(), s.clone()))
                            .collect();
                        elementwise_max(&channels, true, ctx.constants.zscore_eps)?
                    }
                    FuseOp::Zmean => zmean(&scores, ctx.constants.zscore_eps),
                }
            };
            rows.push(fused);
        }
        ScoreMatrix::from_rows(rows)
    }
}

/// Standardize each channel within the query, then average.
fn zmean(channels: &[Vec<f64>], eps: f64) -> Vec<f64> {
    let n = channels.first().map(|c| c.len()).unwrap_or(0);
    let mut acc = vec![0.0; n];
    for channel in channels {
        let z = zscore_vec(channel, eps);
        for (a, v) in acc.iter_mut().zip(&z) {
            *a += v;
        }
    }
    let k = channels.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    acc
}

/// Parse and compile in one step.
pub fn compile_source(source: &str) -> Result<CompiledPipeline> {
    Ok(CompiledPipeline::new(super::parse(source)?))
}

impl std::str::FromStr for CompiledPipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        compile_source(s)
    }
}
