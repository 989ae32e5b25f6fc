//! Straight-line oracle: an independently coded re-derivation of every
//! program formula, compared bit-for-bit against the native implementations
//! on the shared 4x8 fixture. Only the text segmentation and the encoder
//! are shared; every ranking, fusion, feedback, and scoring formula is
//! recomputed here with plain loops.

use std::collections::{BTreeMap, BTreeSet};

use ttc_core::embed::ScoreMatrix;
use ttc_core::encoder::{Adapter, CostMeter, Phase};
use ttc_core::programs::{find_program, Constants, ProgramContext, TaskData};
use ttc_core::text::{sentence_pairs, split_paragraphs, split_sentences, tokenize};

// --- straight-line numeric kernel (independent of ttc_core::embed) ---------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        acc += a[k] * b[k];
    }
    acc
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if n < 1e-12 {
        return None;
    }
    Some(v.iter().map(|x| x / n).collect())
}

/// Descending sort, ties by ascending doc index. Returns (order, ranks).
fn rank_desc(scores: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0usize; scores.len()];
    for (r, &d) in order.iter().enumerate() {
        ranks[d] = r + 1;
    }
    (order, ranks)
}

fn rrf0(channels: &[Vec<f64>]) -> Vec<f64> {
    let n = channels[0].len();
    let mut out = vec![0.0; n];
    for scores in channels {
        let (_, ranks) = rank_desc(scores);
        for d in 0..n {
            out[d] += 1.0 / (0.0 + ranks[d] as f64);
        }
    }
    out
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn zscore_row(xs: &[f64], eps: f64) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < eps {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}

fn zscore_cols(rows: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
    let nq = rows.len();
    let nd = rows[0].len();
    let mut out = vec![vec![0.0; nd]; nq];
    for j in 0..nd {
        let mut mean = 0.0;
        for row in rows.iter().take(nq) {
            mean += row[j];
        }
        mean /= nq as f64;
        let mut var = 0.0;
        for row in rows.iter().take(nq) {
            let dv = row[j] - mean;
            var += dv * dv;
        }
        var /= nq as f64;
        let std = var.sqrt();
        if std < eps {
            continue;
        }
        for i in 0..nq {
            out[i][j] = (rows[i][j] - mean) / std;
        }
    }
    out
}

/// Uniform centroid over rows picked by index list, in list order.
fn centroid_of(rows: &[Vec<f64>], indices: &[usize]) -> Vec<f64> {
    let dim = rows[0].len();
    let mut acc = vec![0.0; dim];
    for &i in indices {
        for (a, x) in acc.iter_mut().zip(&rows[i]) {
            *a += x;
        }
    }
    let n = indices.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

// --- oracle-side task view --------------------------------------------------

/// Everything the oracle derives once per fixture, with its own loops.
struct Oracle {
    n_queries: usize,
    n_docs: usize,
    queries: Vec<Vec<f64>>,
    docs: Vec<Vec<f64>>,
    dense: Vec<Vec<f64>>,
    query_texts: Vec<String>,
    doc_texts: Vec<String>,
    query_tokens: Vec<Vec<String>>,
    doc_tokens: Vec<Vec<String>>,
    /// Sentence chunks per doc (capped, with whole-doc fallback).
    sentences: Vec<Vec<String>>,
    constants: Constants,
}

impl Oracle {
    fn build(ctx: &ProgramContext) -> Oracle {
        let queries: Vec<Vec<f64>> = ctx.queries.iter_rows().map(|r| r.to_vec()).collect();
        let docs: Vec<Vec<f64>> = ctx.docs.iter_rows().map(|r| r.to_vec()).collect();
        let dense: Vec<Vec<f64>> = queries
            .iter()
            .map(|q| docs.iter().map(|d| dot(q, d)).collect())
            .collect();
        let constants = ctx.constants.clone();
        let sentences: Vec<Vec<String>> = ctx
            .doc_texts
            .iter()
            .map(|text| {
                let mut s = split_sentences(text);
                s.truncate(constants.max_sentences_per_doc);
                if s.is_empty() {
                    s.push(text.clone());
                }
                s
            })
            .collect();
        Oracle {
            n_queries: queries.len(),
            n_docs: docs.len(),
            queries,
            docs,
            dense,
            query_texts: ctx.query_texts.to_vec(),
            doc_texts: ctx.doc_texts.to_vec(),
            query_tokens: ctx.query_texts.iter().map(|t| tokenize(t)).collect(),
            doc_tokens: ctx.doc_texts.iter().map(|t| tokenize(t)).collect(),
            sentences,
            constants,
        }
    }

    fn pairs(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| sentence_pairs(s)).collect()
    }

    fn paragraphs(&self) -> Vec<Vec<String>> {
        self.doc_texts
            .iter()
            .map(|text| {
                let mut p = split_paragraphs(text);
                p.truncate(self.constants.max_paragraphs_per_doc);
                if p.is_empty() {
                    p.push(text.clone());
                }
                p
            })
            .collect()
    }

    /// Encode per-doc chunk lists with the shared encoder.
    fn encode_chunks(
        &self,
        ctx: &ProgramContext,
        chunks: &[Vec<String>],
        adapter: Adapter,
    ) -> Vec<Vec<Vec<f64>>> {
        chunks
            .iter()
            .map(|doc_chunks| {
                let m = ctx
                    .encoder
                    .encode(doc_chunks, adapter, Phase::IndexTime)
                    .unwrap();
                m.iter_rows().map(|r| r.to_vec()).collect()
            })
            .collect()
    }

    fn maxsim(&self, q: &[f64], doc_chunks: &[Vec<Vec<f64>>]) -> Vec<f64> {
        doc_chunks
            .iter()
            .map(|chunks| {
                let mut best = f64::NEG_INFINITY;
                for c in chunks {
                    let sim = dot(q, c);
                    if sim > best {
                        best = sim;
                    }
                }
                best
            })
            .collect()
    }

    fn topmean(&self, q: &[f64], doc_chunks: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let all_sims: Vec<f64> = doc_chunks
            .iter()
            .flat_map(|chunks| chunks.iter().map(|c| dot(q, c)))
            .collect();
        let threshold = median(&all_sims);
        let max = self.maxsim(q, doc_chunks);
        doc_chunks
            .iter()
            .enumerate()
            .map(|(d, chunks)| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for c in chunks {
                    let sim = dot(q, c);
                    if sim > threshold {
                        sum += sim;
                        count += 1;
                    }
                }
                if count > 0 {
                    sum / count as f64
                } else {
                    max[d]
                }
            })
            .collect()
    }

    /// Document frequency and the nonnegative IDF, derived from scratch.
    fn idf_map(&self) -> BTreeMap<String, f64> {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for tokens in &self.doc_tokens {
            let set: BTreeSet<&str> = tokens.iter().map(|t| t.as_str()).collect();
            for t in set {
                *df.entry(t.to_string()).or_insert(0) += 1;
            }
        }
        let n = self.n_docs as f64;
        df.into_iter()
            .map(|(t, d)| {
                let v = ((n - d as f64 + 0.5) / (d as f64 + 0.5) + 1.0).ln();
                (t, v)
            })
            .collect()
    }

    fn idf_of(&self, idf: &BTreeMap<String, f64>, token: &str) -> f64 {
        match idf.get(token) {
            Some(v) => *v,
            None => {
                let n = self.n_docs as f64;
                ((n + 0.5) / 0.5 + 1.0).ln()
            }
        }
    }

    fn idf_overlap_row(&self, qi: usize, idf: &BTreeMap<String, f64>) -> Vec<f64> {
        let q_set: BTreeSet<&str> = self.query_tokens[qi].iter().map(|t| t.as_str()).collect();
        (0..self.n_docs)
            .map(|d| {
                let d_set: BTreeSet<&str> =
                    self.doc_tokens[d].iter().map(|t| t.as_str()).collect();
                let mut matched = 0.0;
                let mut total = 0.0;
                for t in &q_set {
                    let w = self.idf_of(idf, t);
                    total += w;
                    if d_set.contains(t) {
                        matched += w;
                    }
                }
                matched / (total + 1e-9)
            })
            .collect()
    }

    fn bigram_row(&self, qi: usize) -> Vec<f64> {
        let q = &self.query_tokens[qi];
        let qb: BTreeSet<(&str, &str)> = q
            .windows(2)
            .map(|w| (w[0].as_str(), w[1].as_str()))
            .collect();
        (0..self.n_docs)
            .map(|d| {
                if qb.is_empty() {
                    return 0.0;
                }
                let db: BTreeSet<(&str, &str)> = self.doc_tokens[d]
                    .windows(2)
                    .map(|w| (w[0].as_str(), w[1].as_str()))
                    .collect();
                let hits = qb.iter().filter(|b| db.contains(*b)).count();
                hits as f64 / (qb.len() as f64 + 1e-9)
            })
            .collect()
    }

    fn coverage_row(&self, qi: usize) -> Vec<f64> {
        let q_set: BTreeSet<&str> = self.query_tokens[qi].iter().map(|t| t.as_str()).collect();
        (0..self.n_docs)
            .map(|d| {
                if q_set.is_empty() {
                    return 0.0;
                }
                let d_set: BTreeSet<&str> =
                    self.doc_tokens[d].iter().map(|t| t.as_str()).collect();
                let hits = q_set.iter().filter(|t| d_set.contains(*t)).count();
                hits as f64 / q_set.len() as f64
            })
            .collect()
    }

    fn rare_row(&self, qi: usize, idf: &BTreeMap<String, f64>) -> Vec<f64> {
        let q_set: BTreeSet<&str> = self.query_tokens[qi].iter().map(|t| t.as_str()).collect();
        (0..self.n_docs)
            .map(|d| {
                let d_set: BTreeSet<&str> =
                    self.doc_tokens[d].iter().map(|t| t.as_str()).collect();
                let mut best: f64 = 0.0;
                for t in &q_set {
                    if d_set.contains(t) {
                        best = best.max(self.idf_of(idf, t));
                    }
                }
                best
            })
            .collect()
    }

    /// Best-matching sentence of a doc for a query: argmax cosine, ties to
    /// the earliest sentence.
    fn best_sentence(
        &self,
        q: &[f64],
        doc: usize,
        sent_embs: &[Vec<Vec<f64>>],
    ) -> String {
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for (i, emb) in sent_embs[doc].iter().enumerate() {
            let sim = dot(q, emb);
            if sim > best_sim {
                best_sim = sim;
                best = i;
            }
        }
        self.sentences[doc][best].clone()
    }

    fn top_half(order: &[usize]) -> Vec<usize> {
        order[..order.len().div_ceil(2)].to_vec()
    }

    fn bottom_half(order: &[usize]) -> Vec<usize> {
        order[order.len() - order.len() / 2..].to_vec()
    }

    fn quarter(&self, order: &[usize]) -> Vec<usize> {
        let k = order
            .len()
            .div_ceil(4)
            .max(self.constants.min_group)
            .min(order.len());
        order[..k].to_vec()
    }

    fn bottom_quarter(&self, order: &[usize]) -> Vec<usize> {
        let k = order
            .len()
            .div_ceil(4)
            .max(self.constants.min_group)
            .min(order.len());
        order[order.len() - k..].to_vec()
    }

    fn median_split(scores: &[f64]) -> (Vec<usize>, Vec<usize>) {
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

    fn feedback(&self, qi: usize, round1: &[f64]) -> Vec<f64> {
        let (pos, neg) = Self::median_split(round1);
        if pos.is_empty() || neg.is_empty() {
            return round1.to_vec();
        }
        let cp = centroid_of(&self.docs, &pos);
        let cn = centroid_of(&self.docs, &neg);
        let moved: Vec<f64> = self.queries[qi]
            .iter()
            .zip(cp.iter().zip(&cn))
            .map(|(q, (p, m))| q + p - m)
            .collect();
        match normalize(&moved) {
            Some(unit) => self.docs.iter().map(|d| dot(&unit, d)).collect(),
            None => round1.to_vec(),
        }
    }

    fn residual(&self, qi: usize, round1: &[f64]) -> Vec<f64> {
        let (pos, _) = Self::median_split(round1);
        if pos.is_empty() {
            return round1.to_vec();
        }
        let cp = centroid_of(&self.docs, &pos);
        let an = norm(&cp);
        if an <= 1e-12 {
            return round1.to_vec();
        }
        let a_hat: Vec<f64> = cp.iter().map(|x| x / an).collect();
        let coeff = dot(&self.queries[qi], &a_hat);
        let residual: Vec<f64> = self.queries[qi]
            .iter()
            .zip(&a_hat)
            .map(|(q, a)| q - coeff * a)
            .collect();
        if norm(&residual) < self.constants.residual_fallback_norm {
            return round1.to_vec();
        }
        match normalize(&residual) {
            Some(unit) => self.docs.iter().map(|d| dot(&unit, d)).collect(),
            None => round1.to_vec(),
        }
    }

    /// The six round-1 channels in program order.
    fn round1_channels(
        &self,
        qi: usize,
        sent_max: &[f64],
        idf: &BTreeMap<String, f64>,
    ) -> Vec<Vec<f64>> {
        vec![
            self.dense[qi].clone(),
            sent_max.to_vec(),
            self.idf_overlap_row(qi, idf),
            self.bigram_row(qi),
            self.coverage_row(qi),
            self.rare_row(qi, idf),
        ]
    }

    /// Argmax with ties to the lowest doc index.
    fn argmax(candidates: &[usize], score: impl Fn(usize) -> f64) -> usize {
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
}

fn run_native(ctx: &ProgramContext, id: &str) -> ScoreMatrix {
    find_program(id).unwrap().run(ctx).unwrap()
}

fn assert_rows_equal(native: &ScoreMatrix, oracle: &[Vec<f64>], id: &str) {
    assert_eq!(native.n_queries(), oracle.len(), "{id}: query count");
    for (qi, row) in oracle.iter().enumerate() {
        assert_eq!(
            native.row(qi),
            row.as_slice(),
            "{id}: query {qi} diverges from the straight-line oracle"
        );
    }
}

struct Fixture {
    provider: ttc_core::encoder::EncoderProvider,
    meter: CostMeter,
    data: TaskData,
}

impl Fixture {
    fn new() -> Fixture {
        let provider = super::provider();
        let meter = CostMeter::new();
        let data = super::shared_data(&provider, &meter);
        Fixture {
            provider,
            meter,
            data,
        }
    }

    fn ctx(&self) -> ProgramContext<'_> {
        self.data.context(&self.provider, &self.meter)
    }
}

fn check_p0() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let native = run_native(&ctx, "p0");
    assert_rows_equal(&native, &oracle.dense, "p0");
}

fn check_bidir_zscore() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let docs_as_queries = ctx
        .encoder
        .encode(ctx.doc_texts, Adapter::RetrievalQuery, Phase::IndexTime)
        .unwrap();
    let dq: Vec<Vec<f64>> = docs_as_queries.iter_rows().map(|r| r.to_vec()).collect();
    let reversed: Vec<Vec<f64>> = oracle
        .queries
        .iter()
        .map(|q| dq.iter().map(|d| dot(q, d)).collect())
        .collect();
    let eps = oracle.constants.zscore_eps;
    let zf = zscore_cols(&oracle.dense, eps);
    let zr = zscore_cols(&reversed, eps);
    let expected: Vec<Vec<f64>> = zf
        .iter()
        .zip(&zr)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let native = run_native(&ctx, "bidir_zscore");
    assert_rows_equal(&native, &expected, "bidir_zscore");
}

fn check_sent_maxsim() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let expected: Vec<Vec<f64>> = oracle
        .queries
        .iter()
        .map(|q| oracle.maxsim(q, &sent_embs))
        .collect();
    let native = run_native(&ctx, "sent_maxsim");
    assert_rows_equal(&native, &expected, "sent_maxsim");
}

fn check_adapt_granularity() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let para_embs = oracle.encode_chunks(&ctx, &oracle.paragraphs(), Adapter::RetrievalPassage);
    let eps = oracle.constants.zscore_eps;
    let expected: Vec<Vec<f64>> = oracle
        .queries
        .iter()
        .map(|q| {
            let zp = zscore_row(&oracle.maxsim(q, &para_embs), eps);
            let zs = zscore_row(&oracle.maxsim(q, &sent_embs), eps);
            let mut out = vec![f64::NEG_INFINITY; oracle.n_docs];
            for channel in [&zp, &zs] {
                for (o, s) in out.iter_mut().zip(channel) {
                    if *s > *o {
                        *o = *s;
                    }
                }
            }
            out
        })
        .collect();
    let native = run_native(&ctx, "adapt_granularity");
    assert_rows_equal(&native, &expected, "adapt_granularity");
}

fn check_coverage_triple() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let eps = oracle.constants.zscore_eps;

    // Debias a flat chunk list against its own centroid, then renormalize.
    let debias = |all: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let indices: Vec<usize> = (0..all.len()).collect();
        let center = centroid_of(all, &indices);
        all.iter()
            .map(|row| {
                let shifted: Vec<f64> = row.iter().zip(&center).map(|(x, c)| x - c).collect();
                normalize(&shifted).unwrap_or_else(|| vec![0.0; shifted.len()])
            })
            .collect()
    };
    // Flatten per-doc chunks, debias globally, regroup.
    let debias_grouped = |grouped: &[Vec<Vec<f64>>]| -> Vec<Vec<Vec<f64>>> {
        let flat: Vec<Vec<f64>> = grouped.iter().flatten().cloned().collect();
        let debiased = debias(&flat);
        let mut out = Vec::with_capacity(grouped.len());
        let mut at = 0;
        for chunks in grouped {
            out.push(debiased[at..at + chunks.len()].to_vec());
            at += chunks.len();
        }
        out
    };

    let sent = debias_grouped(&oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage));
    let pair = debias_grouped(&oracle.encode_chunks(&ctx, &oracle.pairs(), Adapter::RetrievalPassage));
    let para = debias_grouped(&oracle.encode_chunks(&ctx, &oracle.paragraphs(), Adapter::RetrievalPassage));
    let topic_raw = ctx
        .encoder
        .encode_with(
            ttc_core::encoder::EncodeRequest::new(
                oracle.doc_texts.clone(),
                Adapter::RetrievalPassage,
            )
            .with_max_input_tokens(oracle.constants.topic_max_tokens),
            Phase::IndexTime,
        )
        .unwrap();
    let topic = debias(&topic_raw.iter_rows().map(|r| r.to_vec()).collect::<Vec<_>>());
    let fulldoc = debias(&oracle.docs);

    let expected: Vec<Vec<f64>> = oracle
        .queries
        .iter()
        .map(|q| {
            let mut channels: Vec<Vec<f64>> = Vec::new();
            for grouped in [&sent, &pair, &para] {
                channels.push(oracle.maxsim(q, grouped));
                channels.push(oracle.topmean(q, grouped));
            }
            channels.push(topic.iter().map(|t| dot(q, t)).collect());
            channels.push(fulldoc.iter().map(|t| dot(q, t)).collect());
            let mut acc = vec![0.0; oracle.n_docs];
            for channel in &channels {
                let z = zscore_row(channel, eps);
                for (a, v) in acc.iter_mut().zip(&z) {
                    *a += v;
                }
            }
            let k = channels.len() as f64;
            acc.iter_mut().for_each(|a| *a /= k);
            acc
        })
        .collect();
    let native = run_native(&ctx, "coverage_triple");
    assert_rows_equal(&native, &expected, "coverage_triple");
}

fn check_lex_hybrid_rrf() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let idf = oracle.idf_map();
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let channels = vec![
                oracle.dense[qi].clone(),
                oracle.maxsim(&oracle.queries[qi], &sent_embs),
                oracle.idf_overlap_row(qi, &idf),
                oracle.bigram_row(qi),
            ];
            rrf0(&channels)
        })
        .collect();
    let native = run_native(&ctx, "lex_hybrid_rrf");
    assert_rows_equal(&native, &expected, "lex_hybrid_rrf");
}

fn check_cross_round_rrf() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let idf = oracle.idf_map();
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let sent_max = oracle.maxsim(&oracle.queries[qi], &sent_embs);
            let channels = oracle.round1_channels(qi, &sent_max, &idf);
            let round1 = rrf0(&channels);
            let round2 = oracle.feedback(qi, &round1);
            let round3 = oracle.residual(qi, &round1);
            rrf0(&[round1, round2, round3])
        })
        .collect();
    let native = run_native(&ctx, "cross_round_rrf");
    assert_rows_equal(&native, &expected, "cross_round_rrf");
}

fn check_diverse_dual_ctx() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let idf = oracle.idf_map();
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let q = &oracle.queries[qi];
            let channels = vec![
                oracle.dense[qi].clone(),
                oracle.maxsim(q, &sent_embs),
                oracle.idf_overlap_row(qi, &idf),
                oracle.bigram_row(qi),
            ];
            let preliminary = rrf0(&channels);
            let (order, _) = rank_desc(&preliminary);
            let dominant = order[0];
            let half = Oracle::top_half(&order);
            let mut candidates: Vec<usize> =
                half.iter().copied().filter(|d| *d != dominant).collect();
            if candidates.is_empty() {
                candidates = (0..oracle.n_docs).filter(|d| *d != dominant).collect();
            }
            let mut diverse = candidates[0];
            let mut best = (dot(&oracle.docs[diverse], &oracle.docs[dominant]), diverse);
            for &c in &candidates[1..] {
                let pair = (dot(&oracle.docs[c], &oracle.docs[dominant]), c);
                if pair < best {
                    best = pair;
                    diverse = c;
                }
            }

            let texts: Vec<String> = [dominant, diverse]
                .iter()
                .map(|&a| {
                    format!(
                        "{} {}",
                        oracle.query_texts[qi],
                        oracle.best_sentence(q, a, &sent_embs)
                    )
                })
                .collect();
            let encoded = ctx
                .encoder
                .encode(&texts, Adapter::RetrievalQuery, Phase::QueryTime)
                .unwrap();
            let half_set: BTreeSet<usize> = half.iter().copied().collect();
            let mut rounds = vec![preliminary];
            for row in encoded.iter_rows() {
                let scores: Vec<f64> = oracle.docs.iter().map(|d| dot(row, d)).collect();
                let (o, _) = rank_desc(&scores);
                if half_set.contains(&o[0]) {
                    rounds.push(scores);
                }
            }
            rrf0(&rounds)
        })
        .collect();
    let native = run_native(&ctx, "diverse_dual_ctx");
    assert_rows_equal(&native, &expected, "diverse_dual_ctx");
}

fn check_consensus_rocchio() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let eps = oracle.constants.zscore_eps;

    let docs_as_queries = ctx
        .encoder
        .encode(ctx.doc_texts, Adapter::RetrievalQuery, Phase::IndexTime)
        .unwrap();
    let queries_as_docs = ctx
        .encoder
        .encode(ctx.query_texts, Adapter::RetrievalPassage, Phase::QueryTime)
        .unwrap();
    let rev_docs: Vec<Vec<f64>> = oracle
        .queries
        .iter()
        .map(|q| docs_as_queries.iter_rows().map(|d| dot(q, d)).collect())
        .collect();
    let rev_queries: Vec<Vec<f64>> = queries_as_docs
        .iter_rows()
        .map(|qp| oracle.docs.iter().map(|d| dot(qp, d)).collect())
        .collect();
    let z_rev_docs = zscore_cols(&rev_docs, eps);
    let z_rev_queries = zscore_cols(&rev_queries, eps);

    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let dense = oracle.dense[qi].clone();
            let (order, _) = rank_desc(&dense);
            let quarter = oracle.quarter(&order);
            let mean_sims: Vec<f64> = quarter
                .iter()
                .map(|&i| {
                    let others: f64 = quarter
                        .iter()
                        .filter(|&&j| j != i)
                        .map(|&j| dot(&oracle.docs[i], &oracle.docs[j]))
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
            let mut negatives = outliers;
            for d in Oracle::bottom_half(&order) {
                if !negatives.contains(&d) {
                    negatives.push(d);
                }
            }
            let feedback = if core.is_empty() || negatives.is_empty() {
                dense.clone()
            } else {
                let cp = centroid_of(&oracle.docs, &core);
                let cn = centroid_of(&oracle.docs, &negatives);
                let moved: Vec<f64> = oracle.queries[qi]
                    .iter()
                    .zip(cp.iter().zip(&cn))
                    .map(|(q, (p, m))| q + p - m)
                    .collect();
                match normalize(&moved) {
                    Some(unit) => oracle.docs.iter().map(|d| dot(&unit, d)).collect(),
                    None => dense.clone(),
                }
            };
            rrf0(&[
                dense,
                feedback,
                z_rev_docs[qi].clone(),
                z_rev_queries[qi].clone(),
            ])
        })
        .collect();
    let native = run_native(&ctx, "consensus_rocchio");
    assert_rows_equal(&native, &expected, "consensus_rocchio");
}

fn check_neg_contrastive() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let q = &oracle.queries[qi];
            let dense = oracle.dense[qi].clone();
            let (order, _) = rank_desc(&dense);
            let top = order[0];
            let bottom = *order.last().unwrap();
            let texts = vec![
                format!(
                    "{} {}",
                    oracle.query_texts[qi],
                    oracle.best_sentence(q, top, &sent_embs)
                ),
                format!(
                    "{} {}",
                    oracle.query_texts[qi],
                    oracle.best_sentence(q, bottom, &sent_embs)
                ),
            ];
            let encoded = ctx
                .encoder
                .encode(&texts, Adapter::RetrievalQuery, Phase::QueryTime)
                .unwrap();
            let q_pos = encoded.row(0);
            let q_neg = encoded.row(1);
            let mut rounds = vec![
                dense,
                oracle.docs.iter().map(|d| dot(q_pos, d)).collect(),
            ];
            let contrast: Vec<f64> = q_pos.iter().zip(q_neg).map(|(p, n)| p - n).collect();
            if let Some(unit) = normalize(&contrast) {
                rounds.push(oracle.docs.iter().map(|d| dot(&unit, d)).collect());
            }
            rrf0(&rounds)
        })
        .collect();
    let native = run_native(&ctx, "neg_contrastive");
    assert_rows_equal(&native, &expected, "neg_contrastive");
}

/// Expansion rounds shared by the momentum and centrality oracles.
fn contrast_rounds(
    oracle: &Oracle,
    ctx: &ProgramContext,
    qi: usize,
    pos_anchor: usize,
    neg_anchor: usize,
    sent_embs: &[Vec<Vec<f64>>],
) -> Vec<Vec<f64>> {
    let q = &oracle.queries[qi];
    let pos_text = format!(
        "{} {}",
        oracle.query_texts[qi],
        oracle.best_sentence(q, pos_anchor, sent_embs)
    );
    let neg_text = format!(
        "{} {}",
        oracle.query_texts[qi],
        oracle.best_sentence(q, neg_anchor, sent_embs)
    );
    let mut rounds = Vec::new();
    for adapter in Adapter::ALL {
        let encoded = ctx
            .encoder
            .encode(
                &[pos_text.clone(), neg_text.clone()],
                adapter,
                Phase::QueryTime,
            )
            .unwrap();
        let contrast: Vec<f64> = encoded
            .row(0)
            .iter()
            .zip(encoded.row(1))
            .map(|(p, n)| p - n)
            .collect();
        if let Some(unit) = normalize(&contrast) {
            rounds.push(oracle.docs.iter().map(|d| dot(&unit, d)).collect());
        }
    }
    rounds
}

fn check_momentum() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let idf = oracle.idf_map();
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let sent_max = oracle.maxsim(&oracle.queries[qi], &sent_embs);
            let channels = oracle.round1_channels(qi, &sent_max, &idf);
            let round1 = rrf0(&channels);
            let (_, base_ranks) = rank_desc(&oracle.dense[qi]);
            let (order, r1_ranks) = rank_desc(&round1);
            let pos = Oracle::argmax(&Oracle::top_half(&order), |d| {
                base_ranks[d] as f64 - r1_ranks[d] as f64
            });
            let neg = Oracle::argmax(&Oracle::bottom_half(&order), |d| {
                r1_ranks[d] as f64 - base_ranks[d] as f64
            });
            let mut rounds = vec![round1];
            rounds.extend(contrast_rounds(&oracle, &ctx, qi, pos, neg, &sent_embs));
            rrf0(&rounds)
        })
        .collect();
    let native = run_native(&ctx, "momentum");
    assert_rows_equal(&native, &expected, "momentum");
}

fn centrality_anchors_oracle(oracle: &Oracle, order: &[usize]) -> (usize, usize) {
    let quarter = oracle.quarter(order);
    let pos = Oracle::argmax(&quarter, |i| {
        quarter
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| dot(&oracle.docs[i], &oracle.docs[j]))
            .sum()
    });
    let centroid = centroid_of(&oracle.docs, &quarter);
    let bottom = Oracle::bottom_half(order);
    let neg = if norm(&centroid) <= 1e-12 {
        *bottom.last().unwrap()
    } else {
        Oracle::argmax(&bottom, |d| dot(&oracle.docs[d], &centroid))
    };
    (pos, neg)
}

fn check_graph_centrality() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let idf = oracle.idf_map();
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let sent_max = oracle.maxsim(&oracle.queries[qi], &sent_embs);
            let channels = oracle.round1_channels(qi, &sent_max, &idf);
            let round1 = rrf0(&channels);
            let (order, _) = rank_desc(&round1);
            let (pos, neg) = centrality_anchors_oracle(&oracle, &order);
            let feedback = oracle.feedback(qi, &round1);
            let mut rounds = vec![round1, feedback];
            rounds.extend(contrast_rounds(&oracle, &ctx, qi, pos, neg, &sent_embs));
            rrf0(&rounds)
        })
        .collect();
    let native = run_native(&ctx, "graph_centrality");
    assert_rows_equal(&native, &expected, "graph_centrality");
}

fn check_fisher_stability() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let eps = oracle.constants.zscore_eps;
    let sent_embs = oracle.encode_chunks(&ctx, &oracle.sentences, Adapter::RetrievalPassage);
    let idf = oracle.idf_map();

    let docs_as_queries = ctx
        .encoder
        .encode(ctx.doc_texts, Adapter::RetrievalQuery, Phase::IndexTime)
        .unwrap();
    let queries_as_docs = ctx
        .encoder
        .encode(ctx.query_texts, Adapter::RetrievalPassage, Phase::QueryTime)
        .unwrap();
    let rev_docs: Vec<Vec<f64>> = oracle
        .queries
        .iter()
        .map(|q| docs_as_queries.iter_rows().map(|d| dot(q, d)).collect())
        .collect();
    let rev_queries: Vec<Vec<f64>> = queries_as_docs
        .iter_rows()
        .map(|qp| oracle.docs.iter().map(|d| dot(qp, d)).collect())
        .collect();
    let z_rev_docs = zscore_cols(&rev_docs, eps);
    let z_rev_queries = zscore_cols(&rev_queries, eps);

    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let q = &oracle.queries[qi];
            let sent_max = oracle.maxsim(q, &sent_embs);
            let mut channels = oracle.round1_channels(qi, &sent_max, &idf);
            let round1 = rrf0(&channels);
            channels.push(round1.clone());
            channels.push(oracle.feedback(qi, &round1));
            channels.push(oracle.residual(qi, &round1));

            let (order, _) = rank_desc(&round1);
            let (pos_anchor, neg_anchor) = centrality_anchors_oracle(&oracle, &order);
            let pos_text = format!(
                "{} {}",
                oracle.query_texts[qi],
                oracle.best_sentence(q, pos_anchor, &sent_embs)
            );
            let neg_text = format!(
                "{} {}",
                oracle.query_texts[qi],
                oracle.best_sentence(q, neg_anchor, &sent_embs)
            );
            for adapter in Adapter::ALL {
                let encoded = ctx
                    .encoder
                    .encode(
                        &[pos_text.clone(), neg_text.clone()],
                        adapter,
                        Phase::QueryTime,
                    )
                    .unwrap();
                channels.push(oracle.docs.iter().map(|d| dot(encoded.row(0), d)).collect());
                let contrast: Vec<f64> = encoded
                    .row(0)
                    .iter()
                    .zip(encoded.row(1))
                    .map(|(p, n)| p - n)
                    .collect();
                if let Some(unit) = normalize(&contrast) {
                    channels.push(oracle.docs.iter().map(|d| dot(&unit, d)).collect());
                }
            }

            channels.push(z_rev_docs[qi].clone());
            channels.push(z_rev_queries[qi].clone());

            let top = oracle.quarter(&order);
            let bottom = oracle.bottom_quarter(&order);
            let c_top = centroid_of(&oracle.docs, &top);
            let c_bot = centroid_of(&oracle.docs, &bottom);
            let dir: Vec<f64> = c_top.iter().zip(&c_bot).map(|(t, b)| t - b).collect();
            if let Some(w) = normalize(&dir) {
                channels.push(oracle.docs.iter().map(|d| dot(&w, d)).collect());
            }

            // Stability: negated population variance of ranks across every
            // preceding channel.
            let rank_vecs: Vec<Vec<usize>> =
                channels.iter().map(|c| rank_desc(c).1).collect();
            let c = rank_vecs.len() as f64;
            let stability: Vec<f64> = (0..oracle.n_docs)
                .map(|d| {
                    let mean = rank_vecs.iter().map(|r| r[d] as f64).sum::<f64>() / c;
                    let var = rank_vecs
                        .iter()
                        .map(|r| {
                            let dv = r[d] as f64 - mean;
                            dv * dv
                        })
                        .sum::<f64>()
                        / c;
                    -var
                })
                .collect();
            channels.push(stability);

            rrf0(&channels)
        })
        .collect();
    let native = run_native(&ctx, "fisher_stability");
    assert_rows_equal(&native, &expected, "fisher_stability");
}

fn check_soft_centroid() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let (k, alpha, tau) = (
        oracle.constants.soft_centroid_k,
        oracle.constants.soft_centroid_alpha,
        oracle.constants.soft_centroid_tau,
    );
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let scores = &oracle.dense[qi];
            let (order, _) = rank_desc(scores);
            let top_k = &order[..k.min(oracle.n_docs)];
            let top_scores: Vec<f64> = top_k.iter().map(|&d| scores[d]).collect();
            let m = top_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / tau;
            let exps: Vec<f64> = top_scores.iter().map(|x| (x / tau - m).exp()).collect();
            let total: f64 = exps.iter().sum();
            let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
            let mut c_pos = vec![0.0; oracle.docs[0].len()];
            for (&d, w) in top_k.iter().zip(&weights) {
                for (acc, x) in c_pos.iter_mut().zip(&oracle.docs[d]) {
                    *acc += w * x;
                }
            }
            let moved: Vec<f64> = oracle.queries[qi]
                .iter()
                .zip(&c_pos)
                .map(|(q, c)| (1.0 - alpha) * q + alpha * c)
                .collect();
            match normalize(&moved) {
                Some(unit) => oracle.docs.iter().map(|d| dot(&unit, d)).collect(),
                None => scores.clone(),
            }
        })
        .collect();
    let native = run_native(&ctx, "soft_centroid");
    assert_rows_equal(&native, &expected, "soft_centroid");
}

fn check_classical_rocchio() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let (k, beta) = (oracle.constants.rocchio_k, oracle.constants.rocchio_beta);
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let scores = &oracle.dense[qi];
            let (order, _) = rank_desc(scores);
            let top_k: Vec<usize> = order[..k.min(oracle.n_docs)].to_vec();
            let mean = centroid_of(&oracle.docs, &top_k);
            let moved: Vec<f64> = oracle.queries[qi]
                .iter()
                .zip(&mean)
                .map(|(q, m)| (1.0 - beta) * q + beta * m)
                .collect();
            match normalize(&moved) {
                Some(unit) => oracle.docs.iter().map(|d| dot(&unit, d)).collect(),
                None => scores.clone(),
            }
        })
        .collect();
    let native = run_native(&ctx, "classical_rocchio");
    assert_rows_equal(&native, &expected, "classical_rocchio");
}

fn check_vanilla_bm25_dense_rrf() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    let idf = oracle.idf_map();
    let (k1, b) = (oracle.constants.bm25_k1, oracle.constants.bm25_b);
    let doc_len: Vec<f64> = oracle.doc_tokens.iter().map(|t| t.len() as f64).collect();
    let avgdl = doc_len.iter().sum::<f64>() / doc_len.len() as f64;
    let tf_maps: Vec<BTreeMap<&str, u32>> = oracle
        .doc_tokens
        .iter()
        .map(|tokens| {
            let mut tf = BTreeMap::new();
            for t in tokens {
                *tf.entry(t.as_str()).or_insert(0u32) += 1;
            }
            tf
        })
        .collect();
    let expected: Vec<Vec<f64>> = (0..oracle.n_queries)
        .map(|qi| {
            let q_terms: BTreeSet<&str> =
                oracle.query_tokens[qi].iter().map(|t| t.as_str()).collect();
            let bm25: Vec<f64> = (0..oracle.n_docs)
                .map(|d| {
                    let mut total = 0.0;
                    for term in &q_terms {
                        let Some(&tf) = tf_maps[d].get(term) else {
                            continue;
                        };
                        let tf = tf as f64;
                        let len_norm = 1.0 - b + b * doc_len[d] / avgdl;
                        total += oracle.idf_of(&idf, term) * (tf * (k1 + 1.0))
                            / (tf + k1 * len_norm);
                    }
                    total
                })
                .collect();
            rrf0(&[bm25, oracle.dense[qi].clone()])
        })
        .collect();
    let native = run_native(&ctx, "vanilla_bm25_dense_rrf");
    assert_rows_equal(&native, &expected, "vanilla_bm25_dense_rrf");
}


/// Run the native program and compare it against the oracle expectation.
pub fn verify_program(id: &str) {
    match id {
        "p0" => check_p0(),
        "bidir_zscore" => check_bidir_zscore(),
        "sent_maxsim" => check_sent_maxsim(),
        "adapt_granularity" => check_adapt_granularity(),
        "coverage_triple" => check_coverage_triple(),
        "lex_hybrid_rrf" => check_lex_hybrid_rrf(),
        "cross_round_rrf" => check_cross_round_rrf(),
        "diverse_dual_ctx" => check_diverse_dual_ctx(),
        "consensus_rocchio" => check_consensus_rocchio(),
        "neg_contrastive" => check_neg_contrastive(),
        "momentum" => check_momentum(),
        "graph_centrality" => check_graph_centrality(),
        "fisher_stability" => check_fisher_stability(),
        "soft_centroid" => check_soft_centroid(),
        "classical_rocchio" => check_classical_rocchio(),
        "vanilla_bm25_dense_rrf" => check_vanilla_bm25_dense_rrf(),
        other => panic!("no oracle for program {other:?}"),
    }
}

/// Every program the oracle covers.
pub const ORACLE_IDS: [&str; 16] = [
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
    "soft_centroid",
    "classical_rocchio",
    "vanilla_bm25_dense_rrf",
];

/// The full sixteen-cell classical feedback grid against a straight-line
/// re-derivation of the same interpolation.
pub fn verify_rocchio_grid() {
    use ttc_core::programs::{classical_rocchio, ROCCHIO_GRID_BETA, ROCCHIO_GRID_K};

    let fx = Fixture::new();
    let ctx = fx.ctx();
    let oracle = Oracle::build(&ctx);
    for k in ROCCHIO_GRID_K {
        for beta in ROCCHIO_GRID_BETA {
            let native = classical_rocchio(&ctx, k, beta).unwrap();
            for qi in 0..oracle.n_queries {
                let scores = &oracle.dense[qi];
                let (order, _) = rank_desc(scores);
                let top_k: Vec<usize> = order[..k.min(oracle.n_docs)].to_vec();
                let mean = centroid_of(&oracle.docs, &top_k);
                let moved: Vec<f64> = oracle.queries[qi]
                    .iter()
                    .zip(&mean)
                    .map(|(q, m)| (1.0 - beta) * q + beta * m)
                    .collect();
                let expected: Vec<f64> = match normalize(&moved) {
                    Some(unit) => oracle.docs.iter().map(|d| dot(&unit, d)).collect(),
                    None => scores.clone(),
                };
                assert_eq!(
                    native.row(qi),
                    expected.as_slice(),
                    "grid cell K={k} beta={beta} query {qi}"
                );
            }
        }
    }
}
