//! Punctuation repair driven by forced-alignment timing.
//!
//! Per-character durations give a pause threshold; every inter-unit gap
//! longer than the threshold carries punctuation (kept, or a comma inserted)
//! and every shorter gap carries none. Text after the last unit is never
//! touched.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::stats;
use crate::text::{is_punctuation, Lang};

/// Weight of the duration spread in the pause threshold.
pub const SPREAD_COEFFICIENT: f64 = 2.6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PunctError {
    #[error("alignment is empty")]
    EmptyAlignment,
    #[error("alignment mismatch at unit {index}: text has `{text}`, alignment has `{aligned}`")]
    AlignmentMismatch {
        index: usize,
        text: String,
        aligned: String,
    },
    #[error("alignment has {aligned} units but the text has {text}")]
    LengthMismatch { text: usize, aligned: usize },
    #[error("alignment record {index} is not a positive, ordered span")]
    InvalidAlignment { index: usize },
}

/// Timing of one text unit, as produced by a forced aligner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharAlignment {
    #[serde(rename = "char")]
    pub unit: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl CharAlignment {
    pub fn new(unit: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self {
            unit: unit.into(),
            start_s,
            end_s,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub mean: f64,
    /// Population variance, seconds squared.
    pub variance: f64,
}

/// Which spread measure is added to the mean duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `mean + 2.6 * variance`.
    #[default]
    Variance,
    /// `mean + 2.6 * std`.
    StdDev,
}

pub fn duration_stats(aligns: &[CharAlignment]) -> Result<DurationStats, PunctError> {
    if aligns.is_empty() {
        return Err(PunctError::EmptyAlignment);
    }
    let durations: Vec<f64> = aligns.iter().map(CharAlignment::duration_s).collect();
    let mean = stats::mean(&durations);
    Ok(DurationStats {
        mean,
        variance: stats::variance(&durations, mean),
    })
}

/// Statistics pooled over many utterances.
pub fn corpus_duration_stats(utterances: &[&[CharAlignment]]) -> Result<DurationStats, PunctError> {
    let pooled: Vec<CharAlignment> = utterances.iter().flat_map(|u| u.iter().cloned()).collect();
    duration_stats(&pooled)
}

pub fn punct_threshold(mean: f64, variance: f64) -> f64 {
    mean + SPREAD_COEFFICIENT * variance
}

pub fn threshold_for(stats: &DurationStats, mode: ThresholdMode) -> f64 {
    match mode {
        ThresholdMode::Variance => punct_threshold(stats.mean, stats.variance),
        ThresholdMode::StdDev => stats.mean + SPREAD_COEFFICIENT * libm::sqrt(stats.variance),
    }
}

/// Text split into aligned units and the separators between them.
struct Layout<'a> {
    leading: &'a str,
    units: Vec<&'a str>,
    /// `seps[i]` sits between `units[i]` and `units[i + 1]`.
    seps: Vec<&'a str>,
    trailing: &'a str,
}

fn is_unit_char(c: char, lang: Lang) -> bool {
    !c.is_whitespace() && (!is_punctuation(c) || (lang == Lang::En && c == '\''))
}

fn layout(text: &str, lang: Lang) -> Layout<'_> {
    // Unit byte ranges.
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let unit = is_unit_char(c, lang);
        match (lang, unit, open) {
            (Lang::Zh, true, _) => spans.push((i, i + c.len_utf8())),
            (Lang::En, true, None) => open = Some(i),
            (Lang::En, false, Some(s)) => {
                spans.push((s, i));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        spans.push((s, text.len()));
    }
    let Some(&(first, _)) = spans.first() else {
        return Layout {
            leading: text,
            units: Vec::new(),
            seps: Vec::new(),
            trailing: "",
        };
    };
    let last = spans[spans.len() - 1].1;
    Layout {
        leading: &text[..first],
        units: spans.iter().map(|&(s, e)| &text[s..e]).collect(),
        seps: spans.windows(2).map(|w| &text[w[0].1..w[1].0]).collect(),
        trailing: &text[last..],
    }
}

/// Units of `text` that an alignment must list one-to-one.
pub fn alignment_units(text: &str, lang: Lang) -> Vec<&str> {
    layout(text, lang).units
}

fn check_alignment(aligns: &[CharAlignment]) -> Result<(), PunctError> {
    for (index, a) in aligns.iter().enumerate() {
        let ordered = index == 0 || aligns[index - 1].end_s <= a.start_s;
        if !(a.end_s > a.start_s && a.start_s >= 0.0 && ordered) {
            return Err(PunctError::InvalidAlignment { index });
        }
    }
    Ok(())
}

pub fn optimize_punctuation(
    text: &str,
    aligns: &[CharAlignment],
    threshold: f64,
    lang: Lang,
) -> Result<String, PunctError> {
    let layout = layout(text, lang);
    if layout.units.len() != aligns.len() {
        return Err(PunctError::LengthMismatch {
            text: layout.units.len(),
            aligned: aligns.len(),
        });
    }
    for (index, (unit, a)) in layout.units.iter().zip(aligns).enumerate() {
        if *unit != a.unit {
            return Err(PunctError::AlignmentMismatch {
                index,
                text: (*unit).into(),
                aligned: a.unit.clone(),
            });
        }
    }
    check_alignment(aligns)?;

    let mut out = String::with_capacity(text.len() + 8);
    out.push_str(layout.leading);
    for (i, unit) in layout.units.iter().enumerate() {
        out.push_str(unit);
        let Some(sep) = layout.seps.get(i) else {
            continue;
        };
        let gap = aligns[i + 1].start_s - aligns[i].end_s;
        let has_punct = sep.chars().any(is_punctuation);
        if gap > threshold {
            if !has_punct {
                out.push_str(lang.default_comma());
                if lang == Lang::En && sep.is_empty() {
                    out.push(' ');
                }
            }
            out.push_str(sep);
        } else {
            match lang {
                Lang::En => out.push(' '),
                Lang::Zh => out.extend(sep.chars().filter(|c| c.is_whitespace())),
            }
        }
    }
    out.push_str(layout.trailing);
    Ok(out)
}
