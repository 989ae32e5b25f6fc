//! HTTP encode backend.
//!
//! Wire format: `POST {endpoint}/encode` with body
//! `{"texts": [...], "adapter": "...", "dim": n|null, "max_tokens": n|null}`;
//! the response is `{"embeddings": [[...], ...]}`. Transport and malformed
//! responses surface as the retryable `EncodeUnavailable` after up to
//! `retries` extra attempts with exponential backoff.

use serde::{Deserialize, Serialize};

use super::Adapter;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct WireRequest<'a> {
    texts: &'a [&'a str],
    adapter: &'a str,
    dim: Option<usize>,
    max_tokens: Option<usize>,
}

#[derive(Deserialize)]
struct WireResponse {
    embeddings: Vec<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub(super) fn encode_batch(
    endpoint: &str,
    texts: &[&str],
    adapter: Adapter,
    dim: Option<usize>,
    max_tokens: Option<usize>,
    timeout_ms: u64,
    retries: u32,
) -> Result<Vec<Vec<f64>>> {
    let url = format!("{}/encode", endpoint.trim_end_matches('/'));
    let body = WireRequest {
        texts,
        adapter: adapter.as_str(),
        dim,
        max_tokens,
    };
    let mut backoff_ms = 100u64;
    let mut last_err = String::new();
    for attempt in 0..=retries {
        if attempt > 0 {
            std::thread::sleep(std::time::Duration::from_millis(backoff_ms));
            backoff_ms = backoff_ms.saturating_mul(2);
        }
        match try_once(&url, &body, timeout_ms, texts.len()) {
            Ok(vectors) => return Ok(vectors),
            Err(e) => last_err = e,
        }
    }
    Err(Error::EncodeUnavailable { reason: last_err })
}

fn try_once(
    url: &str,
    body: &WireRequest<'_>,
    timeout_ms: u64,
    expected_rows: usize,
) -> std::result::Result<Vec<Vec<f64>>, String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(std::time::Duration::from_millis(timeout_ms)))
        .build()
        .into();
    let mut response = agent
        .post(url)
        .send_json(body)
        .map_err(|e| format!("request failed: {e}"))?;
    let parsed: WireResponse = response
        .body_mut()
        .read_json()
        .map_err(|e| format!("malformed response: {e}"))?;
    if parsed.embeddings.len() != expected_rows {
        return Err(format!(
            "response held {} embeddings for {} texts",
            parsed.embeddings.len(),
            expected_rows
        ));
    }
    if parsed
        .embeddings
        .iter()
        .any(|v| v.is_empty() || v.iter().any(|x| !x.is_finite()))
    {
        return Err("response held empty or non-finite embeddings".into());
    }
    Ok(parsed.embeddings)
}
