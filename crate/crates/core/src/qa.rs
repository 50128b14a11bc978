//! Edit-distance metrics and the two-backend WER/CER retention gate.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::text::{is_punctuation, Lang};

/// Retention threshold: both transcripts must score strictly below 5%.
pub const RETENTION_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QaError {
    #[error("error rate undefined for an empty reference with {errors} edits")]
    UndefinedRate { errors: usize },
    #[error("backend `{name}` failed: {message}")]
    BackendError { name: String, message: String },
    #[error("double check needs two distinct backends, got `{0}` twice")]
    DuplicateBackend(String),
}

/// Counts of an optimal unit-cost alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditOps {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
}

impl EditOps {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// One step of an alignment script, reading the reference left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditStep {
    Match,
    /// Reference unit replaced by `hyp[index]`.
    Substitute(usize),
    /// `hyp[index]` inserted.
    Insert(usize),
    Delete,
}

/// Minimal alignment script. Backtracking prefers substitution (or match)
/// over insertion over deletion when several optimal moves exist.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditStep> {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    let mut dp = vec![0usize; (n + 1) * width];
    for (j, d) in dp[..width].iter_mut().enumerate() {
        *d = j;
    }
    for i in 1..=n {
        dp[i * width] = i;
        for j in 1..=m {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let diag = dp[(i - 1) * width + j - 1] + cost;
            let ins = dp[i * width + j - 1] + 1;
            let del = dp[(i - 1) * width + j] + 1;
            dp[i * width + j] = diag.min(ins).min(del);
        }
    }

    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if dp[(i - 1) * width + j - 1] + usize::from(!same) == here {
                steps.push(if same {
                    EditStep::Match
                } else {
                    EditStep::Substitute(j - 1)
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && dp[i * width + j - 1] + 1 == here {
            steps.push(EditStep::Insert(j - 1));
            j -= 1;
        } else {
            steps.push(EditStep::Delete);
            i -= 1;
        }
    }
    steps.reverse();
    steps
}

pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let mut ops = EditOps {
        ref_len: reference.len(),
        ..EditOps::default()
    };
    for step in align(reference, hypothesis) {
        match step {
            EditStep::Match => {}
            EditStep::Substitute(_) => ops.substitutions += 1,
            EditStep::Insert(_) => ops.insertions += 1,
            EditStep::Delete => ops.deletions += 1,
        }
    }
    ops
}

/// `(S + D + I) / ref_len`; may exceed 1.
pub fn error_rate(ops: &EditOps) -> Result<f64, QaError> {
    if ops.ref_len == 0 {
        return match ops.total() {
            0 => Ok(0.0),
            errors => Err(QaError::UndefinedRate { errors }),
        };
    }
    Ok(ops.total() as f64 / ops.ref_len as f64)
}

/// Scoring units: lowercase words for English, single characters for
/// Chinese. Punctuation is dropped, digits are kept verbatim.
pub fn text_normalize(text: &str, lang: Lang) -> Vec<String> {
    match lang {
        Lang::En => {
            let mut words = Vec::new();
            for raw in text.split_whitespace() {
                let word: String = raw
                    .chars()
                    .filter(|c| !is_punctuation(*c))
                    .flat_map(char::to_lowercase)
                    .collect();
                if !word.is_empty() {
                    words.push(word);
                }
            }
            words
        }
        Lang::Zh => text
            .chars()
            .filter(|c| !c.is_whitespace() && !is_punctuation(*c))
            .map(|c| c.to_string())
            .collect(),
    }
}

/// Error rate of `hypothesis` against `reference` after normalization.
pub fn text_error_rate(reference: &str, hypothesis: &str, lang: Lang) -> Result<f64, QaError> {
    let r = text_normalize(reference, lang);
    let h = text_normalize(hypothesis, lang);
    error_rate(&edit_distance(&r, &h))
}

/// Speech recognizer contract used by the double check.
pub trait AsrBackend {
    fn name(&self) -> &str;
    fn transcribe(&self, clip: &AudioClip) -> Result<String, String>;
}

/// Deterministic backend answering from a `source_id -> transcript` table.
#[derive(Debug, Clone, Default)]
pub struct TableBackend {
    name: String,
    table: alloc::collections::BTreeMap<String, String>,
}

impl TableBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            table: Default::default(),
        }
    }

    pub fn with(mut self, source_id: impl Into<String>, transcript: impl Into<String>) -> Self {
        self.insert(source_id, transcript);
        self
    }

    pub fn insert(&mut self, source_id: impl Into<String>, transcript: impl Into<String>) {
        self.table.insert(source_id.into(), transcript.into());
    }
}

impl AsrBackend for TableBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn transcribe(&self, clip: &AudioClip) -> Result<String, String> {
        self.table
            .get(clip.source_id())
            .cloned()
            .ok_or_else(|| alloc::format!("no transcript for `{}`", clip.source_id()))
    }
}

/// How the two backend rates combine into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateRule {
    /// Both rates must pass.
    #[default]
    Max,
    Mean,
    /// Either rate passing is enough.
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaGate {
    pub threshold: f64,
    pub rule: GateRule,
}

impl Default for QaGate {
    fn default() -> Self {
        Self {
            threshold: RETENTION_THRESHOLD,
            rule: GateRule::Max,
        }
    }
}

impl QaGate {
    pub fn verdict(&self, rates: [f64; 2]) -> QaVerdict {
        let score = match self.rule {
            GateRule::Max => rates[0].max(rates[1]),
            GateRule::Mean => (rates[0] + rates[1]) / 2.0,
            GateRule::Min => rates[0].min(rates[1]),
        };
        QaVerdict {
            rates,
            kept: score < self.threshold,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaVerdict {
    pub rates: [f64; 2],
    pub kept: bool,
    pub threshold: f64,
}

/// Transcribe `clip` with both backends and gate on the error rates against
/// the normalized reference text.
pub fn double_check_filter(
    utterance_text: &str,
    clip: &AudioClip,
    backends: [&dyn AsrBackend; 2],
    lang: Lang,
    gate: &QaGate,
) -> Result<QaVerdict, QaError> {
    if backends[0].name() == backends[1].name() {
        return Err(QaError::DuplicateBackend(backends[0].name().into()));
    }
    let reference = text_normalize(utterance_text, lang);
    let mut rates = [0.0; 2];
    for (rate, backend) in rates.iter_mut().zip(backends) {
        let hyp = backend.transcribe(clip).map_err(|message| QaError::BackendError {
            name: backend.name().into(),
            message,
        })?;
        *rate = error_rate(&edit_distance(&reference, &text_normalize(&hyp, lang)))?;
    }
    Ok(gate.verdict(rates))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_and_substitution() {
        assert_eq!(edit_distance(&words("a b c"), &words("a b c")).total(), 0);
        let ops = edit_distance(&words("a b c"), &words("a x c"));
        assert_eq!((ops.substitutions, ops.deletions, ops.insertions), (1, 0, 0));
    }

    #[test]
    fn empty_reference_is_insertions() {
        let ops = edit_distance(&words(""), &words("a b"));
        assert_eq!((ops.substitutions, ops.deletions, ops.insertions), (0, 0, 2));
        assert_eq!(error_rate(&ops), Err(QaError::UndefinedRate { errors: 2 }));
    }

    #[test]
    fn tie_break_prefers_substitution() {
        // "ab" -> "ba" costs 2 either as two substitutions or insert+delete.
        let ops = edit_distance(&['a', 'b'], &['b', 'a']);
        assert_eq!(ops.substitutions, 2);
        // A deletion is used only when nothing cheaper exists.
        let ops = edit_distance(&['a', 'b'], &['a']);
        assert_eq!((ops.substitutions, ops.deletions, ops.insertions), (0, 1, 0));
    }

    #[test]
    fn rates() {
        let ops = EditOps {
            substitutions: 0,
            deletions: 0,
            insertions: 0,
            ref_len: 10,
        };
        assert_eq!(error_rate(&ops), Ok(0.0));
        let ops = EditOps {
            substitutions: 1,
            deletions: 1,
            insertions: 0,
            ref_len: 10,
        };
        assert!((error_rate(&ops).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(error_rate(&EditOps::default()), Ok(0.0));
        assert_eq!(RETENTION_THRESHOLD, 0.05);
    }

    #[test]
    fn normalization() {
        assert_eq!(text_normalize("Hello, World!", Lang::En), ["hello", "world"]);
        assert_eq!(text_normalize("你好。", Lang::Zh), ["你", "好"]);
        assert_eq!(text_normalize("a  b", Lang::En), ["a", "b"]);
        assert_eq!(text_normalize("Room 101", Lang::En), ["room", "101"]);
        assert_eq!(text_normalize("我有3个", Lang::Zh), ["我", "有", "3", "个"]);
    }

    fn clip() -> AudioClip {
        AudioClip::new(alloc::vec![0.0; 4], 16_000, "u1").unwrap()
    }

    #[test]
    fn double_check_exact() {
        let a = TableBackend::new("a").with("u1", "你好世界");
        let b = TableBackend::new("b").with("u1", "你好，世界。");
        let v = double_check_filter("你好世界", &clip(), [&a, &b], Lang::Zh, &QaGate::default()).unwrap();
        assert!(v.kept);
        assert_eq!(v.rates, [0.0, 0.0]);
    }

    #[test]
    fn gate_rule_application() {
        let gate = QaGate::default();
        assert!(!gate.verdict([0.03, 0.07]).kept);
        assert!(gate.verdict([0.03, 0.049]).kept);
        assert!(!gate.verdict([0.05, 0.0]).kept);
        let lenient = QaGate {
            rule: GateRule::Min,
            ..gate
        };
        assert!(lenient.verdict([0.03, 0.07]).kept);
    }

    #[test]
    fn backend_failures_are_named() {
        let a = TableBackend::new("para");
        let b = TableBackend::new("sense");
        let err = double_check_filter("x", &clip(), [&a, &b], Lang::Zh, &QaGate::default()).unwrap_err();
        assert!(matches!(err, QaError::BackendError { ref name, .. } if name == "para"));
        let err = double_check_filter("x", &clip(), [&a, &a], Lang::Zh, &QaGate::default()).unwrap_err();
        assert_eq!(err, QaError::DuplicateBackend("para".into()));
    }
}
