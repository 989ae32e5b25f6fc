//! The trivial baseline and the twelve frontier programs, in ascending
//! nominal cost. Document-side re-encoding runs in the index-time phase;
//! per-query expansion encodes run in the query-time phase.

use super::*;
use crate::embed::{zscore_columns, zscore_vec};
use crate::fusion::{
    elementwise_max, maxsim, rank_variance, rrf, top_mean_sim, ChannelScores,
};

/// Returns the baseline scores unchanged; spends nothing.
pub fn p0_baseline(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    Ok(ctx.baseline.clone())
}

/// Re-encodes every document under the query-side adapter and sums the
/// original and reversed score matrices after per-column z-scoring, so each
/// entry reads as standardized deviations above the per-document mean.
pub fn bidir_zscore(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let docs_as_queries =
        ctx.encoder
            .encode(ctx.doc_texts, Adapter::RetrievalQuery, Phase::IndexTime)?;
    let reversed = cosine_scores(ctx.queries, &docs_as_queries)?;
    let eps = ctx.constants.zscore_eps;
    let z_fwd = zscore_columns(ctx.baseline, eps);
    let z_rev = zscore_columns(&reversed, eps);
    let summed: Vec<f64> = z_fwd
        .as_slice()
        .iter()
        .zip(z_rev.as_slice())
        .map(|(a, b)| a + b)
        .collect();
    ScoreMatrix::new(ctx.baseline.n_queries(), ctx.baseline.n_docs(), summed)
}

/// Scores each document by the maximum similarity between the query and any
/// of its sentences, all sentences encoded in one index-time batch.
pub fn sent_maxsim(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (set, embs) = sentence_artifact(ctx)?;
    let n_docs = ctx.docs.rows();
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for q in ctx.queries.iter_rows() {
        rows.push(maxsim(q, &embs, &set.owner, n_docs)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// Paragraph-MaxSim and sentence-MaxSim channels, each standardized within
/// the query, fused by element-wise maximum.
pub fn adapt_granularity(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (sent_set, sent_embs) = sentence_artifact(ctx)?;
    let para_set = ChunkSet::build(ctx.doc_texts, Granularity::Paragraph, ctx.constants);
    let para_embs = para_set.encode(ctx, Adapter::RetrievalPassage, Phase::IndexTime)?;
    let n_docs = ctx.docs.rows();
    let eps = ctx.constants.zscore_eps;
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for q in ctx.queries.iter_rows() {
        let channels = vec![
            ChannelScores::new("paragraph", maxsim(q, &para_embs, &para_set.owner, n_docs)?),
            ChannelScores::new("sentence", maxsim(q, &sent_embs, &sent_set.owner, n_docs)?),
        ];
        rows.push(elementwise_max(&channels, true, eps)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// Subtract the corpus centroid from every row and renormalize; rows that
/// cancel to zero stay zero.
fn debias(embs: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let center = crate::embed::centroid(embs, None)?;
    let mut rows = Vec::with_capacity(embs.rows());
    for row in embs.iter_rows() {
        let shifted: Vec<f64> = row.iter().zip(&center).map(|(x, c)| x - c).collect();
        let (unit, _) = l2_normalize(&shifted)?;
        rows.push(unit);
    }
    EmbeddingMatrix::from_rows(embs.dim(), rows)
}

/// Three granularities times two aggregations, plus a topic channel at
/// 128-token truncation and the full-document channel. Every channel's
/// embeddings are debiased against that channel's corpus centroid before
/// similarity; channels are standardized within the query and averaged.
pub fn coverage_triple(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let n_docs = ctx.docs.rows();
    let eps = ctx.constants.zscore_eps;

    let mut chunk_channels: Vec<(ChunkSet, EmbeddingMatrix)> = Vec::new();
    for granularity in [Granularity::Sentence, Granularity::Pair, Granularity::Paragraph] {
        let set = ChunkSet::build(ctx.doc_texts, granularity, ctx.constants);
        let embs = debias(&set.encode(ctx, Adapter::RetrievalPassage, Phase::IndexTime)?)?;
        chunk_channels.push((set, embs));
    }
    let topic_raw = ctx.encoder.encode_with(
        EncodeRequest::new(ctx.doc_texts.to_vec(), Adapter::RetrievalPassage)
            .with_max_input_tokens(ctx.constants.topic_max_tokens),
        Phase::IndexTime,
    )?;
    let topic = debias(&topic_raw)?;
    let fulldoc = debias(ctx.docs)?;

    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for q in ctx.queries.iter_rows() {
        let mut channels: Vec<Vec<f64>> = Vec::with_capacity(8);
        for (set, embs) in &chunk_channels {
            channels.push(maxsim(q, embs, &set.owner, n_docs)?);
            channels.push(top_mean_sim(q, embs, &set.owner, n_docs)?);
        }
        channels.push(score_against_docs(q, &topic));
        channels.push(score_against_docs(q, &fulldoc));

        let mut acc = vec![0.0; n_docs];
        for channel in &channels {
            let z = zscore_vec(channel, eps);
            for (a, v) in acc.iter_mut().zip(&z) {
                *a += v;
            }
        }
        let k = channels.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        rows.push(acc);
    }
    ScoreMatrix::from_rows(rows)
}

/// The four hybrid channels of the lexical program for one query: dense
/// cosine, sentence MaxSim, IDF-weighted overlap, and bigram overlap.
fn lex_hybrid_channels(
    ctx: &ProgramContext,
    qi: usize,
    sent_set: &ChunkSet,
    sent_embs: &EmbeddingMatrix,
) -> Result<Vec<Vec<f64>>> {
    let n_docs = ctx.docs.rows();
    let q_row = ctx.queries.row(qi);
    Ok(vec![
        ctx.baseline.row(qi).to_vec(),
        maxsim(q_row, sent_embs, &sent_set.owner, n_docs)?,
        idf_overlap_row(ctx, qi),
        bigram_overlap_row(ctx, qi),
    ])
}

/// Fuses dense cosine, sentence MaxSim, and two encoder-free lexical
/// channels through reciprocal rank fusion.
pub fn lex_hybrid_rrf(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (sent_set, sent_embs) = sentence_artifact(ctx)?;
    let k = ctx.constants.rrf_k;
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let channels = lex_hybrid_channels(ctx, qi, &sent_set, &sent_embs)?;
        rows.push(rrf(&rank_all(&channels), k)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// The six round-1 channels of the iterative programs: the four hybrid
/// channels plus query-term coverage and rare-term IDF.
fn round1_channels(
    ctx: &ProgramContext,
    qi: usize,
    sent_set: &ChunkSet,
    sent_embs: &EmbeddingMatrix,
) -> Result<Vec<Vec<f64>>> {
    let mut channels = lex_hybrid_channels(ctx, qi, sent_set, sent_embs)?;
    channels.push(coverage_ratio_row(ctx, qi));
    channels.push(rare_term_row(ctx, qi));
    Ok(channels)
}

/// Rocchio feedback round over a round-1 score vector: median split, move
/// the query toward the positive centroid and away from the negative one.
/// Falls back to the round-1 scores when a side of the split is empty or
/// the update cancels.
pub(crate) fn feedback_round(
    ctx: &ProgramContext,
    qi: usize,
    round1: &[f64],
) -> Vec<f64> {
    let (pos, neg) = median_split(round1);
    if pos.is_empty() || neg.is_empty() {
        return round1.to_vec();
    }
    let c_pos = centroid_rows(ctx.docs, &pos).expect("pos non-empty");
    let c_neg = centroid_rows(ctx.docs, &neg).expect("neg non-empty");
    match rocchio_query(ctx.queries.row(qi), &c_pos, &c_neg) {
        Some(moved) => score_against_docs(&moved, ctx.docs),
        None => round1.to_vec(),
    }
}

/// Residual round: the component of the query orthogonal to the positive
/// centroid. When the residual is small the round falls back to round 1.
pub(crate) fn residual_round(
    ctx: &ProgramContext,
    qi: usize,
    round1: &[f64],
) -> Vec<f64> {
    let (pos, _) = median_split(round1);
    if pos.is_empty() {
        return round1.to_vec();
    }
    let c_pos = centroid_rows(ctx.docs, &pos).expect("pos non-empty");
    let q = ctx.queries.row(qi);
    let projection = match crate::embed::project_onto(q, &c_pos) {
        Ok(p) => p,
        Err(_) => return round1.to_vec(),
    };
    let residual: Vec<f64> = q.iter().zip(&projection).map(|(a, b)| a - b).collect();
    if crate::embed::norm(&residual) < ctx.constants.residual_fallback_norm {
        return round1.to_vec();
    }
    match l2_normalize(&residual) {
        Ok((unit, false)) => score_against_docs(&unit, ctx.docs),
        _ => round1.to_vec(),
    }
}

/// Three refinement rounds fused by RRF: the six-channel round 1, a Rocchio
/// feedback round from its median split, and a query-residual round. A
/// document must rank consistently across all rounds to stay on top.
pub fn cross_round_rrf(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (sent_set, sent_embs) = sentence_artifact(ctx)?;
    let k = ctx.constants.rrf_k;
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let channels = round1_channels(ctx, qi, &sent_set, &sent_embs)?;
        let round1 = rrf(&rank_all(&channels), k)?;
        let round2 = feedback_round(ctx, qi, &round1);
        let round3 = residual_round(ctx, qi, &round1);
        rows.push(rrf(&rank_all(&[round1, round2, round3]), k)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// Contextual query expansion from two anchors: the top-ranked document and
/// the top-half document most dissimilar to it. Each anchor's best sentence
/// extends the query text for a re-encode; an expansion round joins the
/// fusion only if its top document also sits in the preliminary top half.
pub fn diverse_dual_ctx(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (sent_set, sent_embs) = sentence_artifact(ctx)?;
    let k = ctx.constants.rrf_k;
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let channels = lex_hybrid_channels(ctx, qi, &sent_set, &sent_embs)?;
        let preliminary = rrf(&rank_all(&channels), k)?;
        let order = ranks_from_scores(&preliminary).order;
        let dominant = order[0];
        let half = top_half(&order);
        let mut candidates: Vec<usize> =
            half.iter().copied().filter(|d| *d != dominant).collect();
        if candidates.is_empty() {
            candidates = (0..ctx.docs.rows()).filter(|d| *d != dominant).collect();
        }
        let diverse = candidates
            .into_iter()
            .map(|d| (dot(ctx.docs.row(d), ctx.docs.row(dominant)), d))
            .min_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(_, d)| d)
            .expect("candidates non-empty on multi-doc shortlist");

        let q_row = ctx.queries.row(qi);
        let expanded: Vec<String> = [dominant, diverse]
            .iter()
            .map(|&anchor| {
                format!(
                    "{} {}",
                    ctx.query_texts[qi],
                    best_sentence(q_row, anchor, &sent_set, &sent_embs)
                )
            })
            .collect();
        let expansions =
            ctx.encoder
                .encode(&expanded, Adapter::RetrievalQuery, Phase::QueryTime)?;

        let half_set: std::collections::BTreeSet<usize> = half.iter().copied().collect();
        let mut rounds = vec![preliminary];
        for row in expansions.iter_rows() {
            let scores = score_against_docs(row, ctx.docs);
            let top1 = ranks_from_scores(&scores).order[0];
            // Adaptive gate: expansions that crown an implausible document
            // stay out of the fusion.
            if half_set.contains(&top1) {
                rounds.push(scores);
            }
        }
        rows.push(rrf(&rank_all(&rounds), k)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// Consensus-filtered feedback: the positive centroid comes only from the
/// core cluster of the dense top quarter (members with mean mutual
/// similarity at or above the median), the negative centroid from outliers
/// and the bottom half, plus full bidirectional cross-perspective channels.
pub fn consensus_rocchio(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let k = ctx.constants.rrf_k;
    let eps = ctx.constants.zscore_eps;
    let docs_as_queries =
        ctx.encoder
            .encode(ctx.doc_texts, Adapter::RetrievalQuery, Phase::IndexTime)?;
    let queries_as_docs =
        ctx.encoder
            .encode(ctx.query_texts, Adapter::RetrievalPassage, Phase::QueryTime)?;
    let rev_docs = zscore_columns(&cosine_scores(ctx.queries, &docs_as_queries)?, eps);
    let rev_queries = zscore_columns(&cosine_scores(&queries_as_docs, ctx.docs)?, eps);

    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let dense = ctx.baseline.row(qi).to_vec();
        let order = ranks_from_scores(&dense).order;
        let quarter = top_quarter(&order, ctx.constants.min_group);

        // Mean similarity of each quarter member to the other members.
        let mean_sims: Vec<f64> = quarter
            .iter()
            .map(|&i| {
                let others: f64 = quarter
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| dot(ctx.docs.row(i), ctx.docs.row(j)))
                    .sum();
                others / (quarter.len() - 1).max(1) as f64
            })
            .collect();
        let cut = median(&mean_sims);
        let core: Vec<usize> = quarter
            .iter()
            .zip(&mean_sims)
            .filter(|(_, m)| **m >= cut)
            .map(|(d, _)| *d)
            .collect();
        let outliers: Vec<usize> = quarter
            .iter()
            .zip(&mean_sims)
            .filter(|(_, m)| **m < cut)
            .map(|(d, _)| *d)
            .collect();

        // Negative set is the literal union of quarter outliers and the
        // bottom half; on tiny shortlists a doc may sit on both sides of
        // the update and partially cancel.
        let mut negatives = outliers;
        for d in bottom_half(&order) {
            if !negatives.contains(&d) {
                negatives.push(d);
            }
        }

        let feedback = if core.is_empty() || negatives.is_empty() {
            dense.clone()
        } else {
            let c_pos = centroid_rows(ctx.docs, &core)?;
            let c_neg = centroid_rows(ctx.docs, &negatives)?;
            match rocchio_query(ctx.queries.row(qi), &c_pos, &c_neg) {
                Some(moved) => score_against_docs(&moved, ctx.docs),
                None => dense.clone(),
            }
        };

        let rounds = vec![
            dense,
            feedback,
            rev_docs.row(qi).to_vec(),
            rev_queries.row(qi).to_vec(),
        ];
        rows.push(rrf(&rank_all(&rounds), k)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// Contrastive query construction: the query expanded with the best sentence
/// of the top document minus the same expansion built from the bottom
/// document. The contrast round drops out of the fusion when the difference
/// cancels.
pub fn neg_contrastive(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (sent_set, sent_embs) = sentence_artifact(ctx)?;
    let k = ctx.constants.rrf_k;
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let dense = ctx.baseline.row(qi).to_vec();
        let order = ranks_from_scores(&dense).order;
        let top = order[0];
        let bottom = *order.last().expect("non-empty shortlist");
        let q_row = ctx.queries.row(qi);
        let texts = vec![
            format!(
                "{} {}",
                ctx.query_texts[qi],
                best_sentence(q_row, top, &sent_set, &sent_embs)
            ),
            format!(
                "{} {}",
                ctx.query_texts[qi],
                best_sentence(q_row, bottom, &sent_set, &sent_embs)
            ),
        ];
        let encoded = ctx
            .encoder
            .encode(&texts, Adapter::RetrievalQuery, Phase::QueryTime)?;
        let q_pos = encoded.row(0);
        let q_neg = encoded.row(1);

        let mut rounds = vec![dense, score_against_docs(q_pos, ctx.docs)];
        let contrast: Vec<f64> = q_pos.iter().zip(q_neg).map(|(p, n)| p - n).collect();
        if let Ok((unit, false)) = l2_normalize(&contrast) {
            rounds.push(score_against_docs(&unit, ctx.docs));
        }
        rows.push(rrf(&rank_all(&rounds), k)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// The adapters a multi-round expansion sweeps, in fixed order; adapter-free
/// encoders collapse the sweep to one round and the meter counts it once.
fn expansion_adapters(ctx: &ProgramContext) -> &'static [Adapter] {
    if ctx.encoder.has_adapters() {
        &Adapter::ALL
    } else {
        &Adapter::ALL[..1]
    }
}

/// Per-adapter contrast rounds from a positive and a negative anchor: each
/// adapter encodes both expansions and scores by the normalized difference.
fn contrast_expansion_rounds(
    ctx: &ProgramContext,
    qi: usize,
    pos_anchor: usize,
    neg_anchor: usize,
    sent_set: &ChunkSet,
    sent_embs: &EmbeddingMatrix,
) -> Result<Vec<Vec<f64>>> {
    let q_row = ctx.queries.row(qi);
    let pos_text = format!(
        "{} {}",
        ctx.query_texts[qi],
        best_sentence(q_row, pos_anchor, sent_set, sent_embs)
    );
    let neg_text = format!(
        "{} {}",
        ctx.query_texts[qi],
        best_sentence(q_row, neg_anchor, sent_set, sent_embs)
    );
    let mut rounds = Vec::new();
    for adapter in expansion_adapters(ctx) {
        let encoded = ctx.encoder.encode(
            &[pos_text.clone(), neg_text.clone()],
            *adapter,
            Phase::QueryTime,
        )?;
        let contrast: Vec<f64> = encoded
            .row(0)
            .iter()
            .zip(encoded.row(1))
            .map(|(p, n)| p - n)
            .collect();
        if let Ok((unit, false)) = l2_normalize(&contrast) {
            rounds.push(score_against_docs(&unit, ctx.docs));
        }
    }
    Ok(rounds)
}

/// Momentum anchor selection: the top-half document whose rank improved most
/// from the baseline to round 1 is the positive anchor; the bottom-half
/// document that dropped most is the negative anchor. Expansion rounds sweep
/// the adapters and fuse with round 1.
pub fn momentum_prog(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (sent_set, sent_embs) = sentence_artifact(ctx)?;
    let k = ctx.constants.rrf_k;
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let channels = round1_channels(ctx, qi, &sent_set, &sent_embs)?;
        let round1 = rrf(&rank_all(&channels), k)?;
        let base_ranks = ranks_from_scores(ctx.baseline.row(qi)).ranks;
        let r1_ranking = ranks_from_scores(&round1);

        // Momentum is rank improvement; ties break by ascending doc index.
        let pos_anchor = argmax_by_score(&top_half(&r1_ranking.order), |d| {
            base_ranks[d] as f64 - r1_ranking.ranks[d] as f64
        });
        let neg_anchor = argmax_by_score(&bottom_half(&r1_ranking.order), |d| {
            r1_ranking.ranks[d] as f64 - base_ranks[d] as f64
        });

        let mut rounds = vec![round1];
        rounds.extend(contrast_expansion_rounds(
            ctx, qi, pos_anchor, neg_anchor, &sent_set, &sent_embs,
        )?);
        rows.push(rrf(&rank_all(&rounds), k)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// Graph-centrality anchors: the most central top-quarter document is the
/// positive anchor; the bottom-half document closest to the top-quarter
/// centroid is the hardest negative. The expansion-plus-feedback pipeline
/// matches the momentum program with a Rocchio round added.
pub fn graph_centrality(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (sent_set, sent_embs) = sentence_artifact(ctx)?;
    let k = ctx.constants.rrf_k;
    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let channels = round1_channels(ctx, qi, &sent_set, &sent_embs)?;
        let round1 = rrf(&rank_all(&channels), k)?;
        let order = ranks_from_scores(&round1).order;
        let (pos_anchor, neg_anchor) = centrality_anchors(ctx, &order);

        let feedback = feedback_round(ctx, qi, &round1);
        let mut rounds = vec![round1, feedback];
        rounds.extend(contrast_expansion_rounds(
            ctx, qi, pos_anchor, neg_anchor, &sent_set, &sent_embs,
        )?);
        rows.push(rrf(&rank_all(&rounds), k)?);
    }
    ScoreMatrix::from_rows(rows)
}

/// Greatest score wins; ties go to the lowest doc index.
fn argmax_by_score(candidates: &[usize], score: impl Fn(usize) -> f64) -> usize {
    let mut best = candidates[0];
    let mut best_score = score(best);
    for &d in &candidates[1..] {
        let s = score(d);
        if s > best_score || (s == best_score && d < best) {
            best = d;
            best_score = s;
        }
    }
    best
}

/// Positive anchor by within-quarter similarity row-sum; negative anchor by
/// similarity to the quarter centroid (the hardest negative).
fn centrality_anchors(ctx: &ProgramContext, order: &[usize]) -> (usize, usize) {
    let quarter = top_quarter(order, ctx.constants.min_group);
    let pos_anchor = argmax_by_score(&quarter, |i| {
        quarter
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| dot(ctx.docs.row(i), ctx.docs.row(j)))
            .sum()
    });
    let q_centroid = centroid_rows(ctx.docs, &quarter).expect("quarter non-empty");
    let bottom = bottom_half(order);
    let neg_anchor = if crate::embed::norm(&q_centroid) <= crate::embed::ZERO_NORM_EPS {
        *bottom.last().expect("bottom half non-empty")
    } else {
        argmax_by_score(&bottom, |d| dot(ctx.docs.row(d), &q_centroid))
    };
    (pos_anchor, neg_anchor)
}

/// The full stability program: the multi-round expansion pipeline plus two
/// zero-cost algebraic channels. The Fisher channel scores along the
/// direction separating the round-1 top quarter from the bottom quarter; the
/// stability channel rewards documents whose rank varies least across every
/// preceding channel. The exact channel list is exported by
/// [`fisher_channel_list`].
pub fn fisher_stability(ctx: &ProgramContext) -> Result<ScoreMatrix> {
    let (sent_set, sent_embs) = sentence_artifact(ctx)?;
    let k = ctx.constants.rrf_k;
    let eps = ctx.constants.zscore_eps;
    let docs_as_queries =
        ctx.encoder
            .encode(ctx.doc_texts, Adapter::RetrievalQuery, Phase::IndexTime)?;
    let queries_as_docs =
        ctx.encoder
            .encode(ctx.query_texts, Adapter::RetrievalPassage, Phase::QueryTime)?;
    let rev_docs = zscore_columns(&cosine_scores(ctx.queries, &docs_as_queries)?, eps);
    let rev_queries = zscore_columns(&cosine_scores(&queries_as_docs, ctx.docs)?, eps);

    let mut rows = Vec::with_capacity(ctx.queries.rows());
    for qi in 0..ctx.queries.rows() {
        let mut channels = round1_channels(ctx, qi, &sent_set, &sent_embs)?;
        let round1 = rrf(&rank_all(&channels), k)?;
        channels.push(round1.clone());
        channels.push(feedback_round(ctx, qi, &round1));
        channels.push(residual_round(ctx, qi, &round1));

        let order = ranks_from_scores(&round1).order;
        let (pos_anchor, neg_anchor) = centrality_anchors(ctx, &order);
        let q_row = ctx.queries.row(qi);
        let pos_text = format!(
            "{} {}",
            ctx.query_texts[qi],
            best_sentence(q_row, pos_anchor, &sent_set, &sent_embs)
        );
        let neg_text = format!(
            "{} {}",
            ctx.query_texts[qi],
            best_sentence(q_row, neg_anchor, &sent_set, &sent_embs)
        );
        for adapter in expansion_adapters(ctx) {
            let encoded = ctx.encoder.encode(
                &[pos_text.clone(), neg_text.clone()],
                *adapter,
                Phase::QueryTime,
            )?;
            channels.push(score_against_docs(encoded.row(0), ctx.docs));
            let contrast: Vec<f64> = encoded
                .row(0)
                .iter()
                .zip(encoded.row(1))
                .map(|(p, n)| p - n)
                .collect();
            if let Ok((unit, false)) = l2_normalize(&contrast) {
                channels.push(score_against_docs(&unit, ctx.docs));
            }
        }

        channels.push(rev_docs.row(qi).to_vec());
        channels.push(rev_queries.row(qi).to_vec());

        // Fisher direction between round-1 top and bottom quarters; a
        // degenerate direction drops the channel.
        let top = top_quarter(&order, ctx.constants.min_group);
        let bottom = bottom_quarter(&order, ctx.constants.min_group);
        let c_top = centroid_rows(ctx.docs, &top)?;
        let c_bot = centroid_rows(ctx.docs, &bottom)?;
        let fisher_dir: Vec<f64> = c_top.iter().zip(&c_bot).map(|(t, b)| t - b).collect();
        if let Ok((w, false)) = l2_normalize(&fisher_dir) {
            channels.push(score_against_docs(&w, ctx.docs));
        }

        let rankings = rank_all(&channels);
        let variance = rank_variance(&rankings)?;
        let stability: Vec<f64> = variance.iter().map(|v| -v).collect();
        channels.push(stability);

        rows.push(rrf(&rank_all(&channels), k)?);
    }
    ScoreMatrix::from_rows(rows)
}
