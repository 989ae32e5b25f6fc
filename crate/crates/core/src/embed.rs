//! Core dense linear algebra: normalization, cosine scoring, column
//! z-scores, centroids, projections, softmax.
//!
//! Everything accumulates in f64 regardless of how embeddings are stored on
//! disk; reproducible ledgers take precedence over speed. All functions are
//! pure and safe to call from any number of threads.

use crate::error::{Error, Result};

/// Norm below which a vector is treated as the zero-row sentinel.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Row-wise matrix of text embeddings. Every row is either L2-normalized
/// (within 1e-6) or the all-zero sentinel produced by degenerate inputs
/// such as empty documents.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_flat(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be > 0".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                left: data.len(),
                right: rows * dim,
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                context: "embedding matrix",
            });
        }
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: r.len(),
                    right: dim,
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(n, dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn is_zero_row(&self, i: usize) -> bool {
        norm(self.row(i)) < ZERO_NORM_EPS
    }

    /// Largest deviation of any non-sentinel row norm from 1.
    pub fn max_unit_norm_error(&self) -> f64 {
        self.iter_rows()
            .map(norm)
            .filter(|n| *n >= ZERO_NORM_EPS)
            .map(|n| (n - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Rectangular matrix of query-by-document scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n_queries: usize,
    n_docs: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(n_queries: usize, n_docs: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != n_queries * n_docs {
            return Err(Error::DimensionMismatch {
                left: scores.len(),
                right: n_queries * n_docs,
            });
        }
        if !scores.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                context: "score matrix",
            });
        }
        Ok(ScoreMatrix {
            n_queries,
            n_docs,
            scores,
        })
    }

    pub fn zeros(n_queries: usize, n_docs: usize) -> Self {
        ScoreMatrix {
            n_queries,
            n_docs,
            scores: vec![0.0; n_queries * n_docs],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_queries = rows.len();
        let n_docs = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut scores = Vec::with_capacity(n_queries * n_docs);
        for r in &rows {
            if r.len() != n_docs {
                return Err(Error::DimensionMismatch {
                    left: r.len(),
                    right: n_docs,
                });
            }
            scores.extend_from_slice(r);
        }
        Self::new(n_queries, n_docs, scores)
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.scores[q * self.n_docs..(q + 1) * self.n_docs]
    }

    pub fn row_mut(&mut self, q: usize) -> &mut [f64] {
        &mut self.scores[q * self.n_docs..(q + 1) * self.n_docs]
    }

    pub fn get(&self, q: usize, d: usize) -> f64 {
        self.scores[q * self.n_docs + d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }
}

/// Dot product accumulated in f64.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for k in 0..a.len() {
        acc += a[k] * b[k];
    }
    acc
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// L2-normalize a vector. Inputs with norm below [`ZERO_NORM_EPS`] map to
/// the zero vector with the degenerate flag set; empty documents occur in
/// real corpora and must not abort a run.
pub fn l2_normalize(v: &[f64]) -> Result<(Vec<f64>, bool)> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite {
            context: "l2_normalize",
        });
    }
    let n = norm(v);
    if n < ZERO_NORM_EPS {
        return Ok((vec![0.0; v.len()], true));
    }
    Ok((v.iter().map(|x| x / n).collect(), false))
}

/// Baseline similarity: `out[i][j] = Q[i] . D[j]`.
pub fn cosine_scores(queries: &EmbeddingMatrix, docs: &EmbeddingMatrix) -> Result<ScoreMatrix> {
    if queries.dim() != docs.dim() {
        return Err(Error::DimensionMismatch {
            left: queries.dim(),
            right: docs.dim(),
        });
    }
    let mut scores = Vec::with_capacity(queries.rows() * docs.rows());
    for q in queries.iter_rows() {
        for d in docs.iter_rows() {
            scores.push(dot(q, d));
        }
    }
    ScoreMatrix::new(queries.rows(), docs.rows(), scores)
}

/// Standardize one score vector: `(x - mean) / max(std, eps)` with the
/// population standard deviation. Vectors with std below `eps` become all
/// zeros rather than erroring; degenerate single-query shortlists must not
/// abort evaluation.
pub fn zscore_vec(xs: &[f64], eps: f64) -> Vec<f64> {
    let n = xs.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < eps {
        return vec![0.0; n];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}

/// Per-column z-score normalization: each column standardized across
/// queries. Columns with population std below `eps` become all-zero.
pub fn zscore_columns(s: &ScoreMatrix, eps: f64) -> ScoreMatrix {
    let (nq, nd) = (s.n_queries(), s.n_docs());
    let mut out = ScoreMatrix::zeros(nq, nd);
    for j in 0..nd {
        let mut mean = 0.0;
        for i in 0..nq {
            mean += s.get(i, j);
        }
        mean /= nq as f64;
        let mut var = 0.0;
        for i in 0..nq {
            let dv = s.get(i, j) - mean;
            var += dv * dv;
        }
        var /= nq as f64;
        let std = var.sqrt();
        if std < eps {
            continue; // column stays zero
        }
        for i in 0..nq {
            out.row_mut(i)[j] = (s.get(i, j) - mean) / std;
        }
    }
    out
}

/// Weighted mean of rows (uniform when `weights` is `None`). The result is
/// not renormalized; callers normalize.
pub fn centroid(m: &EmbeddingMatrix, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if m.rows() == 0 {
        return Err(Error::EmptySelection {
            context: "centroid of empty matrix",
        });
    }
    match weights {
        None => {
            let mut acc = vec![0.0; m.dim()];
            for row in m.iter_rows() {
                for (a, x) in acc.iter_mut().zip(row) {
                    *a += x;
                }
            }
            let n = m.rows() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            Ok(acc)
        }
        Some(w) => {
            if w.len() != m.rows() {
                return Err(Error::DimensionMismatch {
                    left: w.len(),
                    right: m.rows(),
                });
            }
            if w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: "centroid weights",
                });
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::EmptySelection {
                    context: "centroid weights sum to zero",
                });
            }
            let mut acc = vec![0.0; m.dim()];
            for (wi, row) in w.iter().zip(m.iter_rows()) {
                for (a, x) in acc.iter_mut().zip(row) {
                    *a += wi * x;
                }
            }
            acc.iter_mut().for_each(|a| *a /= total);
            Ok(acc)
        }
    }
}

/// Uniform mean over the listed rows, accumulated in index-list order.
pub fn centroid_rows(m: &EmbeddingMatrix, indices: &[usize]) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Err(Error::EmptySelection {
            context: "centroid of empty row selection",
        });
    }
    let mut acc = vec![0.0; m.dim()];
    for &i in indices {
        for (a, x) in acc.iter_mut().zip(m.row(i)) {
            *a += x;
        }
    }
    let n = indices.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Projection of `q` onto the direction of `a`: `(q . a_hat) a_hat`.
pub fn project_onto(q: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    let an = norm(a);
    if an <= ZERO_NORM_EPS {
        return Err(Error::DegenerateAnchor { norm: an });
    }
    let a_hat: Vec<f64> = a.iter().map(|x| x / an).collect();
    let coeff = dot(q, &a_hat);
    Ok(a_hat.iter().map(|x| coeff * x).collect())
}

/// Temperature softmax with the max subtracted for stability:
/// `out_i = exp(x_i/tau - m) / sum_j exp(x_j/tau - m)` where `m = max(x)/tau`.
pub fn softmax(xs: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau > 0.0);
    if xs.is_empty() {
        return Vec::new();
    }
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / tau;
    let exps: Vec<f64> = xs.iter().map(|x| (x / tau - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}
