//! Matched-budget learned heads over frozen embeddings: PCA whitening, a
//! full linear map, a rank-64 residual metric, and a two-layer residual MLP,
//! trained with in-batch InfoNCE under plain gradient descent.
//!
//! The gradients are analytic through the residual structure and the output
//! normalization; finite differences validate them (the module's central
//! property). Heads initialize identity-equivalent, so training can only
//! move away from the baseline.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{dot, l2_normalize, norm, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::eval::{ndcg_at_k, GainVariant};
use crate::rng::SplitMix64;

/// Fixed rank of the low-rank residual metric.
pub const LOWRANK_RANK: usize = 64;
/// Covariance regularizer for whitening.
const WHITEN_LAMBDA: f64 = 1e-4;

/// Dense row-major matrix, just big enough for head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A x` for a column vector of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `A^T x` for a column vector of length `rows`.
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        out
    }

    /// `A += scale * a b^T`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            let s = scale * ai;
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, bj) in row.iter_mut().zip(b) {
                *r += s * bj;
            }
        }
    }
}

/// Parameters of one head. The same shape doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    /// `x -> normalize(T (x - mean))`
    Whitening { mean: Vec<f64>, transform: Mat },
    /// `x -> normalize(W x)`
    Linear { transform: Mat },
    /// `x -> normalize(x + U V^T x)` with `U, V: d x r`
    LowRank { u: Mat, v: Mat },
    /// `x -> normalize(x + W2 relu(W1 x + b1) + b2)` with hidden width `2d`
    Mlp {
        w1: Mat,
        b1: Vec<f64>,
        w2: Mat,
        b2: Vec<f64>,
    },
}

/// Head families selectable for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Whitening,
    Linear,
    LowRank,
    Mlp,
}

impl HeadKind {
    pub fn parse(s: &str) -> Result<HeadKind> {
        match s {
            "whitening" => Ok(HeadKind::Whitening),
            "linear" => Ok(HeadKind::Linear),
            "lowrank" => Ok(HeadKind::LowRank),
            "mlp" => Ok(HeadKind::Mlp),
            other => Err(Error::InvalidConfig(format!("unknown head kind {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HeadKind::Whitening => "whitening",
            HeadKind::Linear => "linear",
            HeadKind::LowRank => "lowrank",
            HeadKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub seed: u64,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 32,
            temperature: 0.1,
            seed: 0,
            holdout_fraction: 0.25,
        }
    }
}

/// Per-example forward cache for backprop.
enum Cache {
    Whitening { shifted: Vec<f64> },
    Linear,
    LowRank { s: Vec<f64> },
    Mlp { pre: Vec<f64>, act: Vec<f64> },
}

impl HeadParams {
    /// Identity-equivalent initialization for a kind at embedding dim `d`.
    pub fn init(kind: HeadKind, dim: usize) -> Self {
        match kind {
            HeadKind::Whitening => HeadParams::Whitening {
                mean: vec![0.0; dim],
                transform: Mat::identity(dim),
            },
            HeadKind::Linear => HeadParams::Linear {
                transform: Mat::identity(dim),
            },
            HeadKind::LowRank => HeadParams::LowRank {
                u: Mat::zeros(dim, LOWRANK_RANK),
                v: Mat::zeros(dim, LOWRANK_RANK),
            },
            HeadKind::Mlp => HeadParams::Mlp {
                w1: Mat::zeros(2 * dim, dim),
                b1: vec![0.0; 2 * dim],
                w2: Mat::zeros(dim, 2 * dim),
                b2: vec![0.0; dim],
            },
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            HeadParams::Whitening { .. } => HeadKind::Whitening,
            HeadParams::Linear { .. } => HeadKind::Linear,
            HeadParams::LowRank { .. } => HeadKind::LowRank,
            HeadParams::Mlp { .. } => HeadKind::Mlp,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HeadParams::Whitening { mean, .. } => mean.len(),
            HeadParams::Linear { transform } => transform.cols,
            HeadParams::LowRank { u, .. } => u.rows,
            HeadParams::Mlp { w1, .. } => w1.cols,
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            HeadParams::Whitening { mean, transform } => HeadParams::Whitening {
                mean: vec![0.0; mean.len()],
                transform: Mat::zeros(transform.rows, transform.cols),
            },
            HeadParams::Linear { transform } => HeadParams::Linear {
                transform: Mat::zeros(transform.rows, transform.cols),
            },
            HeadParams::LowRank { u, v } => HeadParams::LowRank {
                u: Mat::zeros(u.rows, u.cols),
                v: Mat::zeros(v.rows, v.cols),
            },
            HeadParams::Mlp { w1, b1, w2, b2 } => HeadParams::Mlp {
                w1: Mat::zeros(w1.rows, w1.cols),
                b1: vec![0.0; b1.len()],
                w2: Mat::zeros(w2.rows, w2.cols),
                b2: vec![0.0; b2.len()],
            },
        }
    }

    /// Flat view of every parameter, in a fixed block order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            HeadParams::Whitening { mean, transform } => {
                out.extend_from_slice(mean);
                out.extend_from_slice(&transform.data);
            }
            HeadParams::Linear { transform } => out.extend_from_slice(&transform.data),
            HeadParams::LowRank { u, v } => {
                out.extend_from_slice(&u.data);
                out.extend_from_slice(&v.data);
            }
            HeadParams::Mlp { w1, b1, w2, b2 } => {
                out.extend_from_slice(&w1.data);
                out.extend_from_slice(b1);
                out.extend_from_slice(&w2.data);
                out.extend_from_slice(b2);
            }
        }
        out
    }

    /// Overwrite parameters from a flat view produced by [`flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        let mut take = |len: usize| {
            let slice = &flat[at..at + len];
            at += len;
            slice.to_vec()
        };
        match self {
            HeadParams::Whitening { mean, transform } => {
                *mean = take(mean.len());
                transform.data = take(transform.data.len());
            }
            HeadParams::Linear { transform } => transform.data = take(transform.data.len()),
            HeadParams::LowRank { u, v } => {
                u.data = take(u.data.len());
                v.data = take(v.data.len());
            }
            HeadParams::Mlp { w1, b1, w2, b2 } => {
                w1.data = take(w1.data.len());
                *b1 = take(b1.len());
                w2.data = take(w2.data.len());
                *b2 = take(b2.len());
            }
        }
        debug_assert_eq!(at, flat.len());
    }

    /// `self += scale * other`, elementwise over matching shapes.
    pub fn scaled_add(&mut self, other: &HeadParams, scale: f64) {
        let mut flat = self.flatten();
        for (a, b) in flat.iter_mut().zip(other.flatten()) {
            *a += scale * b;
        }
        self.assign_flat(&flat);
    }

    /// Raw forward pass before output normalization.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Cache) {
        match self {
            HeadParams::Whitening { mean, transform } => {
                let shifted: Vec<f64> = x.iter().zip(mean).map(|(a, m)| a - m).collect();
                (transform.matvec(&shifted), Cache::Whitening { shifted })
            }
            HeadParams::Linear { transform } => (transform.matvec(x), Cache::Linear),
            HeadParams::LowRank { u, v } => {
                let s = v.t_matvec(x);
                let us = u.matvec(&s);
                let y: Vec<f64> = x.iter().zip(&us).map(|(a, b)| a + b).collect();
                (y, Cache::LowRank { s })
            }
            HeadParams::Mlp { w1, b1, w2, b2 } => {
                let mut pre = w1.matvec(x);
                for (p, b) in pre.iter_mut().zip(b1) {
                    *p += b;
                }
                let act: Vec<f64> = pre.iter().map(|p| p.max(0.0)).collect();
                let w2a = w2.matvec(&act);
                let y: Vec<f64> = x
                    .iter()
                    .zip(w2a.iter().zip(b2))
                    .map(|(xi, (wi, bi))| xi + wi + bi)
                    .collect();
                (y, Cache::Mlp { pre, act })
            }
        }
    }

    /// Accumulate parameter gradients for one example given `dL/dy`.
    fn backward(&self, x: &[f64], cache: &Cache, dy: &[f64], grads: &mut HeadParams) {
        match (self, cache, grads) {
            (
                HeadParams::Whitening { transform, .. },
                Cache::Whitening { shifted },
                HeadParams::Whitening {
                    mean: dmean,
                    transform: dt,
                },
            ) => {
                dt.add_outer(dy, shifted, 1.0);
                let back = transform.t_matvec(dy);
                for (m, b) in dmean.iter_mut().zip(&back) {
                    *m -= b;
                }
            }
            (HeadParams::Linear { .. }, Cache::Linear, HeadParams::Linear { transform: dw }) => {
                dw.add_outer(dy, x, 1.0);
            }
            (
                HeadParams::LowRank { u, .. },
                Cache::LowRank { s },
                HeadParams::LowRank { u: du, v: dv },
            ) => {
                du.add_outer(dy, s, 1.0);
                let ds = u.t_matvec(dy);
                dv.add_outer(x, &ds, 1.0);
            }
            (
                HeadParams::Mlp { w2, .. },
                Cache::Mlp { pre, act },
                HeadParams::Mlp {
                    w1: dw1,
                    b1: db1,
                    w2: dw2,
                    b2: db2,
                },
            ) => {
                dw2.add_outer(dy, act, 1.0);
                for (b, d) in db2.iter_mut().zip(dy) {
                    *b += d;
                }
                let mut dh = w2.t_matvec(dy);
                for (g, p) in dh.iter_mut().zip(pre) {
                    if *p <= 0.0 {
                        *g = 0.0;
                    }
                }
                dw1.add_outer(&dh, x, 1.0);
                for (b, d) in db1.iter_mut().zip(&dh) {
                    *b += d;
                }
            }
            _ => unreachable!("gradient shape mismatch"),
        }
    }

    /// Transform one vector and normalize. Degenerate outputs map to the
    /// zero sentinel.
    pub fn transform_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (y, _) = self.forward(x);
        Ok(l2_normalize(&y)?.0)
    }

    /// Transform every row and renormalize; downstream scoring stays cosine.
    pub fn apply(&self, m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        let rows: Result<Vec<Vec<f64>>> = m.iter_rows().map(|r| self.transform_vec(r)).collect();
        EmbeddingMatrix::from_rows(self.dim(), rows?)
    }
}

/// In-batch InfoNCE loss and analytic parameter gradients.
///
/// `logits[i][j] = (z_q_i . z_d_j) / tau`; the loss is the mean over the
/// batch of `-log softmax(logits[i])[i]`, differentiated through the output
/// normalization and the head structure.
pub fn infonce_loss(
    queries: &[Vec<f64>],
    positives: &[Vec<f64>],
    head: &HeadParams,
    tau: f64,
) -> Result<(f64, HeadParams)> {
    let b = queries.len();
    if b < 2 {
        return Err(Error::Train(
            "in-batch InfoNCE needs a batch of at least 2".into(),
        ));
    }
    if positives.len() != b {
        return Err(Error::DimensionMismatch {
            left: b,
            right: positives.len(),
        });
    }

    struct Pass {
        y: Vec<f64>,
        z: Vec<f64>,
        norm: f64,
        cache: Cache,
    }
    let run = |x: &Vec<f64>| -> Result<Pass> {
        let (y, cache) = head.forward(x);
        let n = norm(&y);
        if n < 1e-12 {
            return Err(Error::Train("degenerate head output in batch".into()));
        }
        let z: Vec<f64> = y.iter().map(|v| v / n).collect();
        Ok(Pass { y, z, norm: n, cache })
    };
    let q_pass: Vec<Pass> = queries.iter().map(run).collect::<Result<_>>()?;
    let d_pass: Vec<Pass> = positives.iter().map(run).collect::<Result<_>>()?;

    // logits and row softmax
    let mut loss = 0.0;
    let mut probs = vec![vec![0.0; b]; b];
    for i in 0..b {
        let logits: Vec<f64> = (0..b)
            .map(|j| dot(&q_pass[i].z, &d_pass[j].z) / tau)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for j in 0..b {
            probs[i][j] = exps[j] / total;
        }
        loss += -(logits[i] - max - total.ln());
    }
    loss /= b as f64;

    // dL/dz for queries and documents.
    let mut grads = head.zeros_like();
    let dim = head.dim();
    for i in 0..b {
        let mut dz = vec![0.0; dim];
        for j in 0..b {
            let g = (probs[i][j] - if i == j { 1.0 } else { 0.0 }) / (b as f64 * tau);
            for (a, zd) in dz.iter_mut().zip(&d_pass[j].z) {
                *a += g * zd;
            }
        }
        backprop_normalized(&q_pass[i], &dz, queries[i].as_slice(), head, &mut grads);
    }
    for j in 0..b {
        let mut dz = vec![0.0; dim];
        for i in 0..b {
            let g = (probs[i][j] - if i == j { 1.0 } else { 0.0 }) / (b as f64 * tau);
            for (a, zq) in dz.iter_mut().zip(&q_pass[i].z) {
                *a += g * zq;
            }
        }
        backprop_normalized(&d_pass[j], &dz, positives[j].as_slice(), head, &mut grads);
    }

    return Ok((loss, grads));

    fn backprop_normalized(
        pass: &Pass,
        dz: &[f64],
        x: &[f64],
        head: &HeadParams,
        grads: &mut HeadParams,
    ) {
        // z = y / |y|  =>  dL/dy = (dz - (dz . z) z) / |y|
        let gz = dot(dz, &pass.z);
        let dy: Vec<f64> = dz
            .iter()
            .zip(&pass.z)
            .map(|(g, z)| (g - gz * z) / pass.norm)
            .collect();
        let _ = &pass.y;
        head.backward(x, &pass.cache, &dy, grads);
    }
}

/// Unsupervised PCA-whitening fit: `transform = Lambda^{-1/2} E^T` from the
/// eigendecomposition of the regularized covariance.
pub fn fit_whitening(embeddings: &EmbeddingMatrix) -> Result<HeadParams> {
    let n = embeddings.rows();
    let d = embeddings.dim();
    if n == 0 {
        return Err(Error::Train("whitening fit over zero rows".into()));
    }
    let mut mean = vec![0.0; d];
    for row in embeddings.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = Mat::zeros(d, d);
    for row in embeddings.iter_rows() {
        let shifted: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
        cov.add_outer(&shifted, &shifted, 1.0 / n as f64);
    }
    for i in 0..d {
        cov.data[i * d + i] += WHITEN_LAMBDA;
    }

    let (eigenvalues, eigenvectors) = jacobi_eigen(&cov, 100);
    if eigenvalues.iter().any(|l| *l <= 0.0) {
        return Err(Error::Train(
            "covariance not positive definite after regularization".into(),
        ));
    }
    // transform row i = eigvec_i / sqrt(lambda_i)
    let mut transform = Mat::zeros(d, d);
    for (i, lambda) in eigenvalues.iter().enumerate() {
        let scale = 1.0 / lambda.sqrt();
        for j in 0..d {
            // eigenvectors stores vectors in columns.
            transform.data[i * d + j] = eigenvectors.data[j * d + i] * scale;
        }
    }
    Ok(HeadParams::Whitening { mean, transform })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// `(eigenvalues, eigenvectors-in-columns)`.
fn jacobi_eigen(a: &Mat, max_sweeps: usize) -> (Vec<f64>, Mat) {
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.data[i * n + j] * m.data[i * n + j];
            }
        }
        if off.sqrt() < 1e-12 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.data[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m.data[p * n + p];
                let aqq = m.data[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.data[k * n + p];
                    let mkq = m.data[k * n + q];
                    m.data[k * n + p] = c * mkp - s * mkq;
                    m.data[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m.data[p * n + k];
                    let mqk = m.data[q * n + k];
                    m.data[p * n + k] = c * mpk - s * mqk;
                    m.data[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v.data[k * n + p];
                    let vkq = v.data[k * n + q];
                    v.data[k * n + p] = c * vkp - s * vkq;
                    v.data[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..n).map(|i| m.data[i * n + i]).collect();
    (eigenvalues, v)
}

/// One (query, positive document) training pair in embedding space.
pub type Pair = (Vec<f64>, Vec<f64>);

/// Pool every positively judged (query, document) pair across tasks, in
/// task id then judgment order, embedded with the baseline adapters.
pub fn pairs_from_tasks(
    tasks: &[crate::task::Task],
    provider: &crate::encoder::EncoderProvider,
) -> Result<Vec<Pair>> {
    let meter = crate::encoder::CostMeter::new();
    let mut pairs = Vec::new();
    for task in tasks {
        let data = crate::programs::TaskData::build(task, provider, &meter, None)?;
        let doc_index: BTreeMap<&str, usize> = task
            .doc_ids()
            .into_iter()
            .enumerate()
            .map(|(i, d)| (d, i))
            .collect();
        for (qi, qid) in task.query_ids().into_iter().enumerate() {
            for (did, grade) in task.grades_for(qid) {
                if grade > 0 {
                    pairs.push((
                        data.queries.row(qi).to_vec(),
                        data.docs.row(doc_index[did]).to_vec(),
                    ));
                }
            }
        }
    }
    Ok(pairs)
}

/// Mini-batch gradient descent with seeded shuffling and epoch-level model
/// selection by mean nDCG@10 on a held-out split. Residual kinds start at
/// the identity map, so epoch 0 is always the baseline candidate.
pub fn train_head(pairs: &[Pair], kind: HeadKind, config: &TrainConfig) -> Result<HeadParams> {
    if pairs.is_empty() {
        return Err(Error::Train("no training pairs".into()));
    }
    let dim = pairs[0].0.len();

    if kind == HeadKind::Whitening {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(pairs.len() * 2);
        for (q, d) in pairs {
            rows.push(q.clone());
            rows.push(d.clone());
        }
        let stacked = EmbeddingMatrix::from_rows(dim, rows)?;
        return fit_whitening(&stacked);
    }

    let holdout_len = ((pairs.len() as f64) * config.holdout_fraction).round() as usize;
    let holdout_len = holdout_len.min(pairs.len().saturating_sub(2));
    let (holdout, train) = pairs.split_at(holdout_len);

    let mut params = HeadParams::init(kind, dim);
    let mut best = params.clone();
    let mut best_score = holdout_ndcg(&params, holdout)?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffler = SplitMix64::from_stream(config.seed, 0x7261696e);
    for _epoch in 0..config.epochs {
        shuffler.shuffle(&mut order);
        for batch in order.chunks(config.batch_size.max(2)) {
            if batch.len() < 2 {
                continue;
            }
            let q_batch: Vec<Vec<f64>> = batch.iter().map(|&i| train[i].0.clone()).collect();
            let d_batch: Vec<Vec<f64>> = batch.iter().map(|&i| train[i].1.clone()).collect();
            let (_, grads) = infonce_loss(&q_batch, &d_batch, &params, config.temperature)?;
            params.scaled_add(&grads, -config.learning_rate);
        }
        let score = holdout_ndcg(&params, holdout)?;
        if score > best_score {
            best_score = score;
            best = params.clone();
        }
    }
    Ok(best)
}

/// Mean nDCG@10 over holdout queries, each judged against its own positive
/// among all holdout positives. An empty holdout scores 0, which keeps the
/// initial parameters selected.
fn holdout_ndcg(head: &HeadParams, holdout: &[Pair]) -> Result<f64> {
    if holdout.is_empty() {
        return Ok(0.0);
    }
    let ids: Vec<String> = (0..holdout.len()).map(|i| format!("d{i}")).collect();
    let docs: Result<Vec<Vec<f64>>> = holdout.iter().map(|(_, d)| head.transform_vec(d)).collect();
    let docs = docs?;
    let mut total = 0.0;
    for (qi, (q, _)) in holdout.iter().enumerate() {
        let zq = head.transform_vec(q)?;
        let scores: Vec<f64> = docs.iter().map(|d| dot(&zq, d)).collect();
        let ranking = crate::fusion::ranks_from_scores(&scores);
        let order: Vec<&str> = ranking.order.iter().map(|&d| ids[d].as_str()).collect();
        let grades: BTreeMap<&str, u32> = BTreeMap::from([(ids[qi].as_str(), 1u32)]);
        total += ndcg_at_k(&order, &grades, 10, GainVariant::Exponential);
    }
    Ok(total / holdout.len() as f64)
}

// --- checkpoint format -----------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 4] = b"TTCH";
const CHECKPOINT_VERSION: u32 = 1;

impl HeadParams {
    /// Versioned binary checkpoint: magic, version, kind tag, shapes, then
    /// parameters as little-endian f32.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let kind_tag: u8 = match self.kind() {
            HeadKind::Whitening => 0,
            HeadKind::Linear => 1,
            HeadKind::LowRank => 2,
            HeadKind::Mlp => 3,
        };
        out.push(kind_tag);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        let aux: u32 = match self {
            HeadParams::LowRank { u, .. } => u.cols as u32,
            HeadParams::Mlp { w1, .. } => w1.rows as u32,
            _ => 0,
        };
        out.extend_from_slice(&aux.to_le_bytes());
        let flat = self.flatten();
        out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for x in flat {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<HeadParams> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let fail = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
        if bytes.len() < 21 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let kind = match bytes[8] {
            0 => HeadKind::Whitening,
            1 => HeadKind::Linear,
            2 => HeadKind::LowRank,
            3 => HeadKind::Mlp,
            t => return Err(fail(&format!("unknown kind tag {t}"))),
        };
        let dim = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let aux = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
        let body = &bytes[25..];
        if body.len() != count * 4 {
            return Err(fail("truncated parameter block"));
        }
        let flat: Vec<f64> = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let mut params = match kind {
            HeadKind::Whitening | HeadKind::Linear => HeadParams::init(kind, dim),
            HeadKind::LowRank => HeadParams::LowRank {
                u: Mat::zeros(dim, aux),
                v: Mat::zeros(dim, aux),
            },
            HeadKind::Mlp => HeadParams::Mlp {
                w1: Mat::zeros(aux, dim),
                b1: vec![0.0; aux],
                w2: Mat::zeros(dim, aux),
                b2: vec![0.0; dim],
            },
        };
        if params.flatten().len() != flat.len() {
            return Err(fail("parameter count does not match shapes"));
        }
        params.assign_flat(&flat);
        Ok(params)
    }
}

/// Random small-weight head for gradient checking.
pub fn random_head(kind: HeadKind, dim: usize, rank: usize, seed: u64) -> HeadParams {
    let mut g = SplitMix64::from_stream(seed, 0x68656164);
    let mut randomize = |m: &mut Mat, scale: f64| {
        for x in m.data.iter_mut() {
            *x = g.next_gaussian() * scale;
        }
    };
    match kind {
        HeadKind::Whitening => {
            let mut transform = Mat::identity(dim);
            let mut noise = Mat::zeros(dim, dim);
            randomize(&mut noise, 0.1);
            for (t, n) in transform.data.iter_mut().zip(&noise.data) {
                *t += n;
            }
            let mut mean = vec![0.0; dim];
            for m in mean.iter_mut() {
                *m = g.next_gaussian() * 0.05;
            }
            HeadParams::Whitening { mean, transform }
        }
        HeadKind::Linear => {
            let mut transform = Mat::identity(dim);
            let mut noise = Mat::zeros(dim, dim);
            randomize(&mut noise, 0.1);
            for (t, n) in transform.data.iter_mut().zip(&noise.data) {
                *t += n;
            }
            HeadParams::Linear { transform }
        }
        HeadKind::LowRank => {
            let mut u = Mat::zeros(dim, rank);
            let mut v = Mat::zeros(dim, rank);
            randomize(&mut u, 0.1);
            randomize(&mut v, 0.1);
            HeadParams::LowRank { u, v }
        }
        HeadKind::Mlp => {
            let h = 2 * dim;
            let mut w1 = Mat::zeros(h, dim);
            let mut w2 = Mat::zeros(dim, h);
            randomize(&mut w1, 0.2);
            randomize(&mut w2, 0.1);
            let mut b1 = vec![0.0; h];
            for b in b1.iter_mut() {
                *b = g.next_gaussian() * 0.1;
            }
            let mut b2 = vec![0.0; dim];
            for b in b2.iter_mut() {
                *b = g.next_gaussian() * 0.05;
            }
            HeadParams::Mlp { w1, b1, w2, b2 }
        }
    }
}
