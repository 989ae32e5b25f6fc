//! Plain-text configuration: `[section]` headers over `key = value` lines,
//! `#` comments. CLI flags override file values; the effective config is
//! canonicalized (sections and keys sorted), hashed, and echoed into every
//! output for provenance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ttc_core::encoder::{Backend, ProviderConfig};

pub const SEED_ENV: &str = "TTC_SEED";

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::from("general");
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected 'key = value', got {raw:?}", lineno + 1);
            };
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { sections })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: String) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value);
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    pub fn get_or(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_string()
    }

    pub fn get_usize(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            Some(v) => v
                .parse()
                .with_context(|| format!("[{section}] {key} = {v:?} is not an integer")),
            None => Ok(default),
        }
    }

    pub fn get_u64(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.get(section, key) {
            Some(v) => v
                .parse()
                .with_context(|| format!("[{section}] {key} = {v:?} is not an integer")),
            None => Ok(default),
        }
    }

    pub fn get_f64(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            Some(v) => v
                .parse()
                .with_context(|| format!("[{section}] {key} = {v:?} is not a number")),
            None => Ok(default),
        }
    }

    pub fn get_bool(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(section, key) {
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => bail!("[{section}] {key} = {v:?} is not a boolean"),
            None => Ok(default),
        }
    }

    /// Comma-separated list value.
    pub fn get_list(&self, section: &str, key: &str) -> Vec<String> {
        self.get(section, key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Canonical text: sections and keys sorted, normalized spacing.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (section, entries) in &self.sections {
            if entries.is_empty() {
                continue;
            }
            out.push_str(&format!("[{section}]\n"));
            for (key, value) in entries {
                out.push_str(&format!("{key} = {value}\n"));
            }
        }
        out
    }

    /// Short content hash of the canonical form.
    pub fn hash(&self) -> String {
        use ttc_core::rng::fnv1a;
        let canonical = self.canonical();
        // Two passes with different salts give a 128-bit tag.
        let a = fnv1a(canonical.as_bytes());
        let b = fnv1a(format!("ttc:{canonical}").as_bytes());
        format!("{a:016x}{b:016x}")
    }

    /// Effective seed: TTC_SEED env overrides the config value.
    pub fn seed(&self) -> Result<u64> {
        if let Ok(env_seed) = std::env::var(SEED_ENV) {
            if !env_seed.is_empty() {
                return env_seed
                    .parse()
                    .with_context(|| format!("{SEED_ENV}={env_seed:?} is not an integer"));
            }
        }
        self.get_u64("general", "seed", 42)
    }

    /// Build the provider from the `[provider]` section.
    pub fn provider_config(&self) -> Result<ProviderConfig> {
        let backend = match self.get_or("provider", "backend", "synthetic").as_str() {
            "synthetic" => Backend::Synthetic,
            "file-cache" => Backend::FileCache,
            "http" => Backend::Http,
            other => bail!("[provider] backend = {other:?} (expected synthetic, file-cache, http)"),
        };
        Ok(ProviderConfig {
            backend,
            native_dim: self.get_usize("provider", "native_dim", 256)?,
            seed: self.get_u64("provider", "seed", self.seed()?)?,
            endpoint: self.get("provider", "endpoint").map(|s| s.to_string()),
            cache_path: self.get("provider", "cache_path").map(PathBuf::from),
            has_adapters: self.get_bool("provider", "has_adapters", true)?,
            timeout_ms: self.get_u64("provider", "timeout_ms", 30_000)?,
            retries: self.get_u64("provider", "retries", 3)? as u32,
            delay_per_text_us: self.get_u64("provider", "delay_per_text_us", 0)?,
        })
    }

    pub fn task_dirs(&self) -> Vec<PathBuf> {
        self.get_list("eval", "tasks")
            .into_iter()
            .map(PathBuf::from)
            .collect()
    }
}
