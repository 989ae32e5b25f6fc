//! Rank computation and fusion: reciprocal rank fusion, z-norm fusion,
//! element-wise max, MaxSim/TopMean aggregation over chunks, and the
//! rank-variance stability channel.
//!
//! Ties break by ascending doc index everywhere. One global rule keeps
//! ledgers deterministic.

use crate::embed::{dot, zscore_vec, EmbeddingMatrix};
use crate::error::{Error, Result};

/// One scoring channel for a single query: a named score per shortlist doc,
/// higher is better.
#[derive(Debug, Clone)]
pub struct ChannelScores {
    pub label: String,
    pub scores: Vec<f64>,
}

impl ChannelScores {
    pub fn new(label: impl Into<String>, scores: Vec<f64>) -> Self {
        ChannelScores {
            label: label.into(),
            scores,
        }
    }
}

/// Ordinal ranking of a shortlist: `ranks[d]` is 1 for the best doc, and
/// `order` lists doc indices best-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub ranks: Vec<usize>,
    pub order: Vec<usize>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }
}

/// Descending sort with ties broken by ascending doc index.
pub fn ranks_from_scores(scores: &[f64]) -> Ranking {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0usize; scores.len()];
    for (r, &d) in order.iter().enumerate() {
        ranks[d] = r + 1;
    }
    Ranking { ranks, order }
}

/// Reciprocal rank fusion: `out[d] = sum_i 1 / (k + rank_i(d))`. The
/// additive constant defaults to 0 in the programs; pass the classical
/// `k = 60` for sensitivity runs.
pub fn rrf(rankings: &[Ranking], k: f64) -> Result<Vec<f64>> {
    let first = rankings.first().ok_or(Error::EmptySelection {
        context: "rrf over zero rankings",
    })?;
    let n = first.len();
    for r in rankings {
        if r.len() != n {
            return Err(Error::RankingLengthMismatch {
                left: r.len(),
                right: n,
            });
        }
    }
    let mut out = vec![0.0; n];
    for r in rankings {
        for (o, &rank) in out.iter_mut().zip(&r.ranks) {
            *o += 1.0 / (k + rank as f64);
        }
    }
    Ok(out)
}

/// Middle value of a sample; the even case averages the two middle values.
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Max similarity between the query and any chunk of each document.
/// `owner[c]` maps chunk row `c` to its document.
pub fn maxsim(
    query: &[f64],
    chunks: &EmbeddingMatrix,
    owner: &[usize],
    n_docs: usize,
) -> Result<Vec<f64>> {
    debug_assert_eq!(chunks.rows(), owner.len());
    let mut out = vec![f64::NEG_INFINITY; n_docs];
    for (c, chunk) in chunks.iter_rows().enumerate() {
        let d = owner[c];
        let sim = dot(query, chunk);
        if sim > out[d] {
            out[d] = sim;
        }
    }
    if out.contains(&f64::NEG_INFINITY) {
        return Err(Error::EmptySelection {
            context: "document with zero chunks in maxsim",
        });
    }
    Ok(out)
}

/// Mean similarity of each document's chunks strictly above the per-query
/// median over all chunks, falling back to that document's MaxSim when none
/// of its chunks clears the threshold.
pub fn top_mean_sim(
    query: &[f64],
    chunks: &EmbeddingMatrix,
    owner: &[usize],
    n_docs: usize,
) -> Result<Vec<f64>> {
    let max = maxsim(query, chunks, owner, n_docs)?;
    let sims: Vec<f64> = chunks.iter_rows().map(|c| dot(query, c)).collect();
    let threshold = median(&sims);
    let mut sum = vec![0.0; n_docs];
    let mut count = vec![0usize; n_docs];
    for (c, &sim) in sims.iter().enumerate() {
        if sim > threshold {
            sum[owner[c]] += sim;
            count[owner[c]] += 1;
        }
    }
    Ok((0..n_docs)
        .map(|d| {
            if count[d] > 0 {
                sum[d] / count[d] as f64
            } else {
                max[d]
            }
        })
        .collect())
}

/// Population variance of each document's rank across channels. The derived
/// stability score used for fusion is the negated variance, ranked.
pub fn rank_variance(rankings: &[Ranking]) -> Result<Vec<f64>> {
    if rankings.len() < 2 {
        return Err(Error::TooFewChannels(rankings.len()));
    }
    let n = rankings[0].len();
    for r in rankings {
        if r.len() != n {
            return Err(Error::RankingLengthMismatch {
                left: r.len(),
                right: n,
            });
        }
    }
    let c = rankings.len() as f64;
    let out = (0..n)
        .map(|d| {
            let mean = rankings.iter().map(|r| r.ranks[d] as f64).sum::<f64>() / c;
            rankings
                .iter()
                .map(|r| {
                    let dv = r.ranks[d] as f64 - mean;
                    dv * dv
                })
                .sum::<f64>()
                / c
        })
        .collect();
    Ok(out)
}

/// Per-doc maximum across channels, optionally after standardizing each
/// channel across docs (within the query).
pub fn elementwise_max(channels: &[ChannelScores], z_normalize: bool, eps: f64) -> Result<Vec<f64>> {
    let first = channels.first().ok_or(Error::EmptySelection {
        context: "elementwise_max over zero channels",
    })?;
    let n = first.scores.len();
    for c in channels {
        if c.scores.len() != n {
            return Err(Error::RankingLengthMismatch {
                left: c.scores.len(),
                right: n,
            });
        }
    }
    let mut out = vec![f64::NEG_INFINITY; n];
    for c in channels {
        let scores = if z_normalize {
            zscore_vec(&c.scores, eps)
        } else {
            c.scores.clone()
        };
        for (o, s) in out.iter_mut().zip(&scores) {
            if *s > *o {
                *o = *s;
            }
        }
    }
    Ok(out)
}
