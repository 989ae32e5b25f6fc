//! The frozen-encoder abstraction: adapter selection, Matryoshka truncation,
//! input-length control, cost metering, a deterministic synthetic backend, a
//! write-through file cache, and an HTTP client.
//!
//! Embeddings are f32-precision values held in f64 storage: every backend
//! quantizes to f32 at the encode boundary, so a cache round trip is
//! bit-identical to a cold computation and downstream accumulation stays in
//! f64.

mod cache;
mod http;
mod meter;
mod synthetic;

pub use cache::VectorCache;
pub use meter::{CostMeter, Phase};
pub use synthetic::synthetic_encode;

use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::embed::{l2_normalize, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Environment variable overriding the configured HTTP endpoint.
pub const ENDPOINT_ENV: &str = "TTC_ENCODER_ENDPOINT";

/// Task view selected on a multi-adapter encoder. Encoders without adapters
/// expose a single view; every variant then produces identical embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Adapter {
    RetrievalQuery,
    RetrievalPassage,
    Classification,
    TextMatching,
}

impl Adapter {
    pub const ALL: [Adapter; 4] = [
        Adapter::RetrievalQuery,
        Adapter::TextMatching,
        Adapter::Classification,
        Adapter::RetrievalPassage,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Adapter::RetrievalQuery => "retrieval.query",
            Adapter::RetrievalPassage => "retrieval.passage",
            Adapter::Classification => "classification",
            Adapter::TextMatching => "text-matching",
        }
    }

    pub fn parse(s: &str) -> Result<Adapter> {
        match s {
            "retrieval.query" => Ok(Adapter::RetrievalQuery),
            "retrieval.passage" => Ok(Adapter::RetrievalPassage),
            "classification" => Ok(Adapter::Classification),
            "text-matching" => Ok(Adapter::TextMatching),
            other => Err(Error::InvalidConfig(format!("unknown adapter {other:?}"))),
        }
    }
}

/// One batched encode call.
#[derive(Debug, Clone)]
pub struct EncodeRequest {
    pub texts: Vec<String>,
    pub adapter: Adapter,
    pub target_dim: Option<usize>,
    pub max_input_tokens: Option<usize>,
}

impl EncodeRequest {
    pub fn new(texts: Vec<String>, adapter: Adapter) -> Self {
        EncodeRequest {
            texts,
            adapter,
            target_dim: None,
            max_input_tokens: None,
        }
    }

    pub fn with_target_dim(mut self, dim: usize) -> Self {
        self.target_dim = Some(dim);
        self
    }

    pub fn with_max_input_tokens(mut self, tokens: usize) -> Self {
        self.max_input_tokens = Some(tokens);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Synthetic,
    FileCache,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub backend: Backend,
    pub native_dim: usize,
    pub seed: u64,
    pub endpoint: Option<String>,
    pub cache_path: Option<PathBuf>,
    pub has_adapters: bool,
    /// HTTP request timeout in milliseconds.
    pub timeout_ms: u64,
    /// Retries after the first HTTP attempt.
    pub retries: u32,
    /// Artificial per-text latency for the synthetic backend, used by the
    /// bench command to model transformer forward-pass cost.
    pub delay_per_text_us: u64,
}

impl ProviderConfig {
    pub fn synthetic(native_dim: usize, seed: u64) -> Self {
        ProviderConfig {
            backend: Backend::Synthetic,
            native_dim,
            seed,
            endpoint: None,
            cache_path: None,
            has_adapters: true,
            timeout_ms: 30_000,
            retries: 3,
            delay_per_text_us: 0,
        }
    }
}

/// The frozen encoder behind every `encode` call programs make.
pub struct EncoderProvider {
    config: ProviderConfig,
    cache: Option<Mutex<VectorCache>>,
}

impl EncoderProvider {
    pub fn new(mut config: ProviderConfig) -> Result<Self> {
        if config.native_dim == 0 {
            return Err(Error::InvalidConfig("native_dim must be > 0".into()));
        }
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.is_empty() {
                config.endpoint = Some(endpoint);
            }
        }
        match config.backend {
            Backend::Http if config.endpoint.is_none() => {
                return Err(Error::InvalidConfig(
                    "http backend requires an endpoint".into(),
                ));
            }
            Backend::FileCache if config.cache_path.is_none() => {
                return Err(Error::InvalidConfig(
                    "file-cache backend requires cache_path".into(),
                ));
            }
            _ => {}
        }
        let cache = match &config.cache_path {
            Some(path) => Some(Mutex::new(VectorCache::open(path)?)),
            None => None,
        };
        Ok(EncoderProvider { config, cache })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn has_adapters(&self) -> bool {
        self.config.has_adapters
    }

    pub fn native_dim(&self) -> usize {
        self.config.native_dim
    }

    /// Encode a batch: one unit-normalized row per input text, truncated to
    /// `target_dim` and renormalized when set. The meter is incremented by
    /// the number of texts under the given phase; cache hits still count,
    /// because the cost model meters logical encoder calls, not physical
    /// ones.
    pub fn encode(
        &self,
        req: &EncodeRequest,
        meter: &CostMeter,
        phase: Phase,
    ) -> Result<EmbeddingMatrix> {
        if req.texts.is_empty() {
            return Err(Error::InvalidConfig("encode of zero texts".into()));
        }
        let dim = match req.target_dim {
            Some(d) if d == 0 || d > self.config.native_dim => {
                return Err(Error::InvalidConfig(format!(
                    "target_dim {d} outside (0, {}]",
                    self.config.native_dim
                )));
            }
            Some(d) => d,
            None => self.config.native_dim,
        };
        meter.add(phase, req.texts.len() as u64);

        // Adapters collapse to one view on adapter-free encoders.
        let effective = if self.config.has_adapters {
            req.adapter
        } else {
            Adapter::RetrievalQuery
        };

        let mut rows: Vec<Option<Vec<f64>>> = vec![None; req.texts.len()];
        let mut misses: Vec<usize> = Vec::new();
        if let Some(cache) = &self.cache {
            let mut cache = cache.lock().expect("cache lock poisoned");
            for (i, text) in req.texts.iter().enumerate() {
                let key = VectorCache::key(text, effective, req.target_dim, req.max_input_tokens);
                match cache.lookup(&key) {
                    Some(v) if v.len() == dim => rows[i] = Some(v),
                    _ => misses.push(i),
                }
            }
        } else {
            misses = (0..req.texts.len()).collect();
        }

        if !misses.is_empty() {
            let miss_texts: Vec<&str> = misses.iter().map(|&i| req.texts[i].as_str()).collect();
            let fresh = self.compute(&miss_texts, effective, dim, req.max_input_tokens)?;
            if let Some(cache) = &self.cache {
                let mut cache = cache.lock().expect("cache lock poisoned");
                for (&i, v) in misses.iter().zip(&fresh) {
                    let key = VectorCache::key(
                        &req.texts[i],
                        effective,
                        req.target_dim,
                        req.max_input_tokens,
                    );
                    cache.insert(&key, v)?;
                }
            }
            for (&i, v) in misses.iter().zip(fresh) {
                rows[i] = Some(v);
            }
        }

        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.expect("row filled")).collect();
        EmbeddingMatrix::from_rows(dim, rows)
    }

    /// Backend dispatch for texts the cache could not serve.
    fn compute(
        &self,
        texts: &[&str],
        adapter: Adapter,
        dim: usize,
        max_input_tokens: Option<usize>,
    ) -> Result<Vec<Vec<f64>>> {
        match self.config.backend {
            Backend::Synthetic => {
                if self.config.delay_per_text_us > 0 {
                    std::thread::sleep(std::time::Duration::from_micros(
                        self.config.delay_per_text_us * texts.len() as u64,
                    ));
                }
                texts
                    .iter()
                    .map(|t| {
                        let full = synthetic_encode(
                            t,
                            adapter,
                            self.config.seed,
                            self.config.native_dim,
                            max_input_tokens,
                            self.config.has_adapters,
                        );
                        truncate_renormalize(&full, dim)
                    })
                    .collect()
            }
            Backend::Http => {
                let endpoint = self.config.endpoint.as_deref().expect("validated");
                let raw = http::encode_batch(
                    endpoint,
                    texts,
                    adapter,
                    if dim == self.config.native_dim {
                        None
                    } else {
                        Some(dim)
                    },
                    max_input_tokens,
                    self.config.timeout_ms,
                    self.config.retries,
                )?;
                raw.into_iter()
                    .map(|v| {
                        if v.len() != dim {
                            return Err(Error::EncodeUnavailable {
                                reason: format!(
                                    "server returned dim {} instead of {dim}",
                                    v.len()
                                ),
                            });
                        }
                        let (unit, _) = l2_normalize(&v)?;
                        Ok(quantize_f32(&unit))
                    })
                    .collect()
            }
            Backend::FileCache => Err(Error::EncodeUnavailable {
                reason: format!(
                    "{} texts missing from the replay cache",
                    texts.len()
                ),
            }),
        }
    }
}

/// Keep the first `dim` components and renormalize; the zero sentinel stays
/// zero. The result is quantized to f32 precision.
fn truncate_renormalize(full: &[f64], dim: usize) -> Result<Vec<f64>> {
    let prefix = &full[..dim];
    let (unit, _) = l2_normalize(prefix)?;
    Ok(quantize_f32(&unit))
}

/// Round each component to the nearest f32.
pub(crate) fn quantize_f32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| *x as f32 as f64).collect()
}
