//! Centroid-feedback baselines and the stripped BM25+dense fusion control.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use super::*;
use crate::embed::softmax;
use crate::fusion::rrf;

/// Softmax-weighted centroid replacement: the query moves toward a
/// temperature-weighted centroid of its top-K documents.
/// At `alpha = 0` the interpolation endpoint returns the baseline exactly;
/// as `tau -> 0` with a unique top document it collapses to single-document
/// feedback.
pub fn soft_centroid(ctx: &ProgramContext, k: usize, alpha: f64, tau: f64) -> Result<ScoreMatrix> {
    if alpha == 0.0 {
        return Ok(ctx.baseline.clone());
    }
    let n_docs = ctx.docs.rows();
    let dim = ctx.docs.dim();
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let scores = ctx.baseline.row(qi);
        let order = ranks_from_scores(scores).order;
        let top_k = &order[..k.min(n_docs)];
        let top_scores: Vec<f64> = top_k.iter().map(|&d| scores[d]).collect();
        let weights = softmax(&top_scores, tau);
        let mut c_pos = vec![0.0; dim];
        for (&d, w) in top_k.iter().zip(&weights) {
            for (acc, x) in c_pos.iter_mut().zip(ctx.docs.row(d)) {
                *acc += w * x;
            }
        }
        let q = ctx.queries.row(qi);
        let moved: Vec<f64> = q
            .iter()
            .zip(&c_pos)
            .map(|(qi, ci)| (1.0 - alpha) * qi + alpha * ci)
            .collect();
        match l2_normalize(&moved) {
            Ok((unit, false)) => rows.push(score_against_docs(&unit, ctx.docs)),
            _ => rows.push(scores.to_vec()),
        }
    }
    ScoreMatrix::from_rows(rows)
}

/// Registry entry at the universal default `K = 3, alpha = 0.5, tau = 0.05`.
pub fn soft_centroid_default(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    soft_centroid(
        ctx,
        ctx.constants.soft_centroid_k,
        ctx.constants.soft_centroid_alpha,
        ctx.constants.soft_centroid_tau,
    )
}

/// Uniform-mean feedback: `q' = normalize((1-beta) q + beta mean(top-K))`.
/// `beta = 0` is the interpolation endpoint and returns the baseline exactly.
pub fn classical_rocchio(ctx: &ProgramContext, k: usize, beta: f64) -> Result<ScoreMatrix> {
    if beta == 0.0 {
        return Ok(ctx.baseline.clone());
    }
    let n_docs = ctx.docs.rows();
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let scores = ctx.baseline.row(qi);
        let order = ranks_from_scores(scores).order;
        let top_k: Vec<usize> = order[..k.min(n_docs)].to_vec();
        let mean = centroid_rows(ctx.docs, &top_k)?;
        let q = ctx.queries.row(qi);
        let moved: Vec<f64> = q
            .iter()
            .zip(&mean)
            .map(|(qi, mi)| (1.0 - beta) * qi + beta * mi)
            .collect();
        match l2_normalize(&moved) {
            Ok((unit, false)) => rows.push(score_against_docs(&unit, ctx.docs)),
            _ => rows.push(scores.to_vec()),
        }
    }
    ScoreMatrix::from_rows(rows)
}

/// Registry entry at the default grid cell `K = 3, beta = 0.5`.
pub fn classical_rocchio_default(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    classical_rocchio(ctx, ctx.constants.rocchio_k, ctx.constants.rocchio_beta)
}

/// The sixteen-cell classical feedback grid evaluated elsewhere.
pub const ROCCHIO_GRID_K: [usize; 4] = [2, 3, 5, 10];
pub const ROCCHIO_GRID_BETA: [f64; 4] = [0.1, 0.3, 0.5, 0.7];

/// Okapi scoring with TF saturation and length normalization over the
/// shortlist corpus.
pub(crate) struct Bm25 {
    doc_tf: Vec<BTreeMap<String, u32>>,
    doc_len: Vec<f64>,
    avgdl: f64,
    k1: f64,
    b: f64,
}

impl Bm25 {
    pub fn build(doc_tokens: &[Vec<String>], k1: f64, b: f64) -> Self {
        let doc_tf: Vec<BTreeMap<String, u32>> = doc_tokens
            .iter()
            .map(|tokens| {
                let mut tf = BTreeMap::new();
                for t in tokens {
                    *tf.entry(t.clone()).or_insert(0) += 1;
                }
                tf
            })
            .collect();
        let doc_len: Vec<f64> = doc_tokens.iter().map(|t| t.len() as f64).collect();
        let avgdl = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<f64>() / doc_len.len() as f64
        };
        Bm25 {
            doc_tf,
            doc_len,
            avgdl,
            k1,
            b,
        }
    }

    /// Sum over distinct query terms present in the document.
    pub fn score(&self, q_tokens: &[String], doc: usize, stats: &TokenStats) -> f64 {
        let q_terms: BTreeSet<&str> = q_tokens.iter().map(|t| t.as_str()).collect();
        let mut total = 0.0;
        for term in q_terms {
            let tf = match self.doc_tf[doc].get(term) {
                Some(tf) => *tf as f64,
                None => continue,
            };
            let norm = if self.avgdl > 0.0 {
                1.0 - self.b + self.b * self.doc_len[doc] / self.avgdl
            } else {
                1.0
            };
            total += stats.idf(term) * (tf * (self.k1 + 1.0)) / (tf + self.k1 * norm);
        }
        total
    }
}

/// The stripped control: full BM25 and dense cosine fused by the same
/// reciprocal rank fusion, with no z-scoring, granularity, or feedback.
pub fn vanilla_bm25_dense_rrf(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let bm25 = Bm25::build(ctx.doc_tokens, ctx.constants.bm25_k1, ctx.constants.bm25_b);
    let k = ctx.constants.rrf_k;
    let n_docs = ctx.docs.rows();
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let lexical: Vec<f64> = (0..n_docs)
            .map(|d| bm25.score(&ctx.query_tokens[qi], d, ctx.token_stats))
            .collect();
        let dense = ctx.baseline.row(qi).to_vec();
        rows.push(rrf(&rank_all(&[lexical, dense]), k)?);
    }
    ScoreMatrix::from_rows(rows)
}
