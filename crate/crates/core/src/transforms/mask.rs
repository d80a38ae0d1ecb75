use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whitespace tokenization used for masking and prompt-length rules.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// A token sequence with some positions masked out. Consecutive masked
/// positions form one span and share one placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTemplate {
    pub tokens: Vec<String>,
    /// Masked positions, ascending and distinct.
    pub positions: Vec<usize>,
    /// Half-open `[start, end)` spans covering exactly `positions`.
    pub spans: Vec<(usize, usize)>,
    pub placeholders: Vec<String>,
}

impl MaskedTemplate {
    pub fn from_positions(tokens: Vec<String>, mut positions: Vec<usize>) -> Result<Self> {
        positions.sort_unstable();
        positions.dedup();
        if positions.is_empty() {
            return Err(Error::InvalidInput("template needs at least one mask".into()));
        }
        if positions.last().is_some_and(|&p| p >= tokens.len()) {
            return Err(Error::InvalidInput("mask position out of range".into()));
        }
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for &p in &positions {
            match spans.last_mut() {
                Some(last) if last.1 == p => last.1 = p + 1,
                _ => spans.push((p, p + 1)),
            }
        }
        let placeholders = (0..spans.len()).map(|i| format!("<extra_id_{i}>")).collect();
        Ok(MaskedTemplate {
            tokens,
            positions,
            spans,
            placeholders,
        })
    }

    pub fn mask_count(&self) -> usize {
        self.positions.len()
    }

    pub fn original_text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Text with every span replaced by its placeholder, as fill-in-the-blank models expect.
    pub fn sentinel_text(&self) -> String {
        let mut out: Vec<&str> = Vec::with_capacity(self.tokens.len());
        let mut next = 0;
        for (span, placeholder) in self.spans.iter().zip(&self.placeholders) {
            out.extend(self.tokens[next..span.0].iter().map(String::as_str));
            out.push(placeholder);
            next = span.1;
        }
        out.extend(self.tokens[next..].iter().map(String::as_str));
        out.join(" ")
    }

    /// Replace span `i` with `fills[i]`.
    pub fn apply(&self, fills: &[Vec<String>]) -> Result<String> {
        if fills.len() != self.spans.len() {
            return Err(Error::InvalidInput(format!(
                "{} fills for {} spans",
                fills.len(),
                self.spans.len()
            )));
        }
        let mut out: Vec<&str> = Vec::with_capacity(self.tokens.len());
        let mut next = 0;
        for (span, fill) in self.spans.iter().zip(fills) {
            out.extend(self.tokens[next..span.0].iter().map(String::as_str));
            out.extend(fill.iter().map(String::as_str));
            next = span.1;
        }
        out.extend(self.tokens[next..].iter().map(String::as_str));
        Ok(out.join(" "))
    }
}

/// Mask `max(1, round(mask_rate * n))` distinct positions chosen uniformly under `seed`.
pub fn mask_spans(tokens: &[String], mask_rate: f64, seed: u64) -> Result<MaskedTemplate> {
    let n = tokens.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "masking needs at least 2 tokens, got {n}"
        )));
    }
    if !(mask_rate > 0.0 && mask_rate < 1.0) {
        return Err(Error::InvalidInput(format!(
            "mask_rate must lie in (0, 1), got {mask_rate}"
        )));
    }
    let count = ((mask_rate * n as f64).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = index::sample(&mut rng, n, count).into_vec();
    MaskedTemplate::from_positions(tokens.to_vec(), positions)
}
