//! Deterministic synthetic encoder: the bag-of-hashed-words backend that
//! makes lexical overlap correlate with cosine, so reranking programs
//! produce measurable deltas in tests without real model weights.
//!
//! Each word token maps to a pseudorandom gaussian direction keyed by
//! `(token, seed)`; a text embeds as the L2-normalized multiset sum of its
//! token vectors, accumulated in sorted token order so word order never
//! perturbs the bits. Adapters are modeled as fixed seeded block rotations:
//! orthogonal by construction, near identity so cross-adapter relevance
//! signal survives, and collapsing to identity on adapter-free encoders.

use std::collections::BTreeMap;

use super::{quantize_f32, Adapter};
use crate::rng::{fnv1a, SplitMix64};
use crate::text::tokenize;

/// Max rotation angle (radians) for one coordinate-pair Givens rotation.
const ADAPTER_MAX_ANGLE: f64 = 0.25;

/// Encode one text. Empty token lists produce the zero-row sentinel.
pub fn synthetic_encode(
    text: &str,
    adapter: Adapter,
    seed: u64,
    dim: usize,
    max_input_tokens: Option<usize>,
    has_adapters: bool,
) -> Vec<f64> {
    let mut tokens = tokenize(text);
    if let Some(cap) = max_input_tokens {
        tokens.truncate(cap);
    }
    if tokens.is_empty() {
        return vec![0.0; dim];
    }

    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in &tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }

    let mut acc = vec![0.0; dim];
    for (token, count) in counts {
        let mut g = SplitMix64::from_stream(seed, fnv1a(token.as_bytes()));
        let c = count as f64;
        for a in acc.iter_mut() {
            *a += c * g.next_gaussian();
        }
    }

    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < crate::embed::ZERO_NORM_EPS {
        return vec![0.0; dim];
    }
    acc.iter_mut().for_each(|x| *x /= norm);

    if has_adapters && adapter != Adapter::RetrievalQuery {
        apply_adapter_rotation(&mut acc, adapter, seed);
        // Givens rotations preserve the norm up to rounding; renormalize so
        // the unit-row invariant holds exactly as tightly as before.
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        acc.iter_mut().for_each(|x| *x /= norm);
    }

    quantize_f32(&acc)
}

/// Rotate in place by a block-diagonal product of Givens rotations over a
/// seeded random pairing of coordinates. `retrieval.query` is the identity
/// reference view; every other adapter gets its own pairing and angles.
fn apply_adapter_rotation(v: &mut [f64], adapter: Adapter, seed: u64) {
    let dim = v.len();
    let mut g = SplitMix64::from_stream(seed, fnv1a(adapter.as_str().as_bytes()));
    let mut perm: Vec<usize> = (0..dim).collect();
    g.shuffle(&mut perm);
    for pair in perm.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        let theta = (g.next_f64() * 2.0 - 1.0) * ADAPTER_MAX_ANGLE;
        let (sin, cos) = theta.sin_cos();
        let (va, vb) = (v[a], v[b]);
        v[a] = va * cos - vb * sin;
        v[b] = va * sin + vb * cos;
    }
}
