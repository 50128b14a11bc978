//! Text-tokenizer vocabulary pruning and the speech-to-text length-ratio gate.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Speech tokens per second of audio.
pub const SPEECH_TOKEN_RATE_HZ: f64 = 25.0;
/// Entries with more Chinese characters than this are pruned.
pub const MAX_CHINESE_CHARS: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary surface for token {0} is empty")]
    EmptySurface(u32),
    #[error("duration {0} is not a non-negative number of seconds")]
    InvalidDuration(f64),
    #[error("text has no tokens")]
    EmptyText,
    #[error("invalid ratio bounds [{lo}, {hi}]")]
    InvalidBounds { lo: f64, hi: f64 },
}

/// CJK Unified Ideographs plus Extension A.
pub fn is_chinese_char(c: char) -> bool {
    matches!(c, '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}')
}

pub fn chinese_char_count(s: &str) -> usize {
    s.chars().filter(|c| is_chinese_char(*c)).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    token_id: u32,
    surface: String,
}

impl VocabEntry {
    pub fn new(token_id: u32, surface: impl Into<String>) -> Result<Self, VocabError> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(VocabError::EmptySurface(token_id));
        }
        Ok(Self { token_id, surface })
    }

    pub fn token_id(&self) -> u32 {
        self.token_id
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn chinese_char_count(&self) -> usize {
        chinese_char_count(&self.surface)
    }

    pub fn is_prunable(&self) -> bool {
        self.chinese_char_count() > MAX_CHINESE_CHARS
    }
}

/// Kept and removed entries, each in original order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneReport {
    pub kept: Vec<VocabEntry>,
    pub removed: Vec<VocabEntry>,
}

pub fn partition_vocab(entries: &[VocabEntry]) -> PruneReport {
    let (removed, kept) = entries.iter().cloned().partition(VocabEntry::is_prunable);
    PruneReport { kept, removed }
}

/// Drop tokens made of three or more Chinese characters.
pub fn prune_vocab(entries: &[VocabEntry]) -> Vec<VocabEntry> {
    partition_vocab(entries).kept
}

/// Speech tokens for `duration_s` at 25 Hz, rounded half-up.
pub fn speech_token_count(duration_s: f64) -> Result<u64, VocabError> {
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(VocabError::InvalidDuration(duration_s));
    }
    Ok(libm::floor(SPEECH_TOKEN_RATE_HZ * duration_s + 0.5) as u64)
}

/// Inclusive bounds on speech tokens per text token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RatioBounds {
    fn default() -> Self {
        Self { lo: 2.0, hi: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioVerdict {
    pub ratio: f64,
    pub accepted: bool,
}

pub fn ratio_check(
    n_text_tokens: usize,
    n_speech_tokens: u64,
    bounds: &RatioBounds,
) -> Result<RatioVerdict, VocabError> {
    if n_text_tokens == 0 {
        return Err(VocabError::EmptyText);
    }
    if !(bounds.lo <= bounds.hi) {
        return Err(VocabError::InvalidBounds {
            lo: bounds.lo,
            hi: bounds.hi,
        });
    }
    let ratio = n_speech_tokens as f64 / n_text_tokens as f64;
    Ok(RatioVerdict {
        ratio,
        accepted: bounds.lo <= ratio && ratio <= bounds.hi,
    })
}
