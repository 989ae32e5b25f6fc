//! Encoder-free lexical channels and text segmentation: CJK-aware
//! tokenization, sentence/pair/paragraph chunking, IDF statistics, and
//! overlap scores.
//!
//! All scores use token-set semantics; the programs built on them fuse by
//! rank, so the absolute scale only needs to be consistent within a query.

use std::collections::{BTreeMap, BTreeSet};

/// Window fallback size, in word tokens, for text without terminal
/// punctuation.
const WINDOW_TOKENS: usize = 200;
/// Overlap between consecutive fallback windows.
const WINDOW_OVERLAP: usize = 50;
/// Sentence fragments shorter than this many chars merge into a neighbor.
const MIN_FRAGMENT_CHARS: usize = 3;

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'   // CJK Unified Ideographs
        | '\u{3400}'..='\u{4DBF}' // Extension A
        | '\u{3040}'..='\u{309F}' // Hiragana
        | '\u{30A0}'..='\u{30FF}' // Katakana
        | '\u{AC00}'..='\u{D7AF}' // Hangul syllables
    )
}

fn is_ascii_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Tokenize into lowercased ASCII word-character runs; every CJK codepoint
/// is its own token; other scripts fall back to whitespace splitting.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut ascii_run = String::new();
    let mut other_run = String::new();
    let flush_ascii = |run: &mut String, out: &mut Vec<String>| {
        if !run.is_empty() {
            out.push(std::mem::take(run));
        }
    };
    for c in text.chars() {
        if is_ascii_word(c) {
            flush_ascii(&mut other_run, &mut tokens);
            ascii_run.push(c.to_ascii_lowercase());
        } else if is_cjk(c) {
            flush_ascii(&mut ascii_run, &mut tokens);
            flush_ascii(&mut other_run, &mut tokens);
            tokens.push(c.to_string());
        } else if c.is_whitespace() || c.is_ascii() || ('\u{3000}'..='\u{303F}').contains(&c) {
            // ASCII punctuation and CJK punctuation separate tokens.
            flush_ascii(&mut ascii_run, &mut tokens);
            flush_ascii(&mut other_run, &mut tokens);
        } else {
            // Non-CJK non-ASCII scripts: accumulate until whitespace.
            flush_ascii(&mut ascii_run, &mut tokens);
            for lc in c.to_lowercase() {
                other_run.push(lc);
            }
        }
    }
    flush_ascii(&mut ascii_run, &mut tokens);
    flush_ascii(&mut other_run, &mut tokens);
    tokens
}

/// Split on `[.?!]` followed by whitespace or end of text. Fragments shorter
/// than 3 characters merge into their predecessor. Text with no terminal
/// punctuation falls back to fixed windows of 200 word tokens overlapping by
/// 50, so punctuation-free long documents still produce usable chunks.
pub fn split_sentences(text: &str) -> Vec<String> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = trimmed.chars().collect();
    let mut fragments: Vec<String> = Vec::new();
    let mut found_boundary = false;
    let mut start = 0;
    for i in 0..chars.len() {
        let terminal = matches!(chars[i], '.' | '?' | '!');
        let at_boundary =
            terminal && (i + 1 == chars.len() || chars[i + 1].is_whitespace());
        if at_boundary {
            found_boundary = true;
            let frag: String = chars[start..=i].iter().collect();
            let frag = frag.trim().to_string();
            if !frag.is_empty() {
                fragments.push(frag);
            }
            start = i + 1;
        }
    }
    if start < chars.len() {
        let tail: String = chars[start..].iter().collect();
        let tail = tail.trim().to_string();
        if !tail.is_empty() {
            fragments.push(tail);
        }
    }

    if !found_boundary {
        // No terminal punctuation: window fallback.
        let tokens = tokenize(trimmed);
        if tokens.len() <= WINDOW_TOKENS {
            return vec![trimmed.to_string()];
        }
        let step = WINDOW_TOKENS - WINDOW_OVERLAP;
        let mut windows = Vec::new();
        let mut at = 0;
        loop {
            let end = (at + WINDOW_TOKENS).min(tokens.len());
            windows.push(tokens[at..end].join(" "));
            if at + WINDOW_TOKENS >= tokens.len() {
                break;
            }
            at += step;
        }
        return windows;
    }

    // Merge short fragments into a neighbor.
    let mut merged: Vec<String> = Vec::new();
    let mut carry: Option<String> = None;
    for frag in fragments {
        let frag = match carry.take() {
            Some(prefix) => format!("{prefix} {frag}"),
            None => frag,
        };
        if frag.chars().count() < MIN_FRAGMENT_CHARS {
            if let Some(prev) = merged.last_mut() {
                prev.push(' ');
                prev.push_str(&frag);
            } else {
                carry = Some(frag);
            }
        } else {
            merged.push(frag);
        }
    }
    if let Some(rest) = carry {
        merged.push(rest);
    }
    merged
}

/// Split on blank lines, trim, and drop empties. A document with no blank
/// lines is a single paragraph.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join("\n").trim().to_string());
    }
    paragraphs.retain(|p| !p.is_empty());
    paragraphs
}

/// Overlapping consecutive pairs `[s1 s2, s2 s3, ...]`; a single sentence
/// stays a singleton list.
pub fn sentence_pairs(sentences: &[String]) -> Vec<String> {
    if sentences.len() <= 1 {
        return sentences.to_vec();
    }
    sentences
        .windows(2)
        .map(|w| format!("{} {}", w[0], w[1]))
        .collect()
}

/// Per-corpus document-frequency statistics with nonnegative BM25-style IDF:
/// `idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)`.
#[derive(Debug, Clone)]
pub struct TokenStats {
    n_docs: usize,
    idf: BTreeMap<String, f64>,
}

impl TokenStats {
    /// Build stats over tokenized documents (one token list per doc).
    pub fn build(doc_tokens: &[Vec<String>]) -> Self {
        let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
        for tokens in doc_tokens {
            let set: BTreeSet<&str> = tokens.iter().map(|t| t.as_str()).collect();
            for t in set {
                *doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        let n = doc_tokens.len();
        let idf = doc_freq
            .into_iter()
            .map(|(t, df)| (t.to_string(), Self::idf_value(n, df)))
            .collect();
        TokenStats { n_docs: n, idf }
    }

    pub fn idf_value(n_docs: usize, df: usize) -> f64 {
        ((n_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// IDF of a token; unseen tokens get the df=0 value.
    pub fn idf(&self, token: &str) -> f64 {
        match self.idf.get(token) {
            Some(v) => *v,
            None => Self::idf_value(self.n_docs, 0),
        }
    }
}

fn token_set(tokens: &[String]) -> BTreeSet<&str> {
    tokens.iter().map(|t| t.as_str()).collect()
}

/// IDF-weighted word overlap, normalized by the query's IDF mass so scores
/// are comparable across queries.
pub fn idf_overlap(q_tokens: &[String], d_tokens: &[String], stats: &TokenStats) -> f64 {
    let q = token_set(q_tokens);
    let d = token_set(d_tokens);
    let mut matched = 0.0;
    let mut total = 0.0;
    for t in &q {
        let w = stats.idf(t);
        total += w;
        if d.contains(t) {
            matched += w;
        }
    }
    matched / (total + 1e-9)
}

fn bigrams(tokens: &[String]) -> BTreeSet<(&str, &str)> {
    tokens
        .windows(2)
        .map(|w| (w[0].as_str(), w[1].as_str()))
        .collect()
}

/// Fraction of the query's word bigrams present in the document. Zero when
/// the query has fewer than 2 tokens.
pub fn bigram_overlap(q_tokens: &[String], d_tokens: &[String]) -> f64 {
    let qb = bigrams(q_tokens);
    if qb.is_empty() {
        return 0.0;
    }
    let db = bigrams(d_tokens);
    let hits = qb.iter().filter(|b| db.contains(*b)).count();
    hits as f64 / (qb.len() as f64 + 1e-9)
}

/// Fraction of distinct query terms present in the document.
pub fn coverage_ratio(q_tokens: &[String], d_tokens: &[String]) -> f64 {
    let q = token_set(q_tokens);
    if q.is_empty() {
        return 0.0;
    }
    let d = token_set(d_tokens);
    let hits = q.iter().filter(|t| d.contains(*t)).count();
    hits as f64 / q.len() as f64
}

/// Highest IDF among matched query terms; 0 when nothing matches.
pub fn rare_term_score(q_tokens: &[String], d_tokens: &[String], stats: &TokenStats) -> f64 {
    let q = token_set(q_tokens);
    let d = token_set(d_tokens);
    q.iter()
        .filter(|t| d.contains(*t))
        .map(|t| stats.idf(t))
        .fold(0.0, f64::max)
}
