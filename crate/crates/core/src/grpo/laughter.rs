use alloc::string::String;
use alloc::vec::Vec;

use super::LaughReward;
use crate::audio::Segment;

/// Words counted as written laughter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaughterLexicon {
    /// Lowercased, longest first.
    words: Vec<String>,
}

impl Default for LaughterLexicon {
    fn default() -> Self {
        Self::new(["哈", "嘿", "呵", "ha", "hey"])
    }
}

impl LaughterLexicon {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut words: Vec<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        words.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then_with(|| a.cmp(b)));
        words.dedup();
        Self { words }
    }

    /// Longest laughter run in `text`, counting consecutive laughter words
    /// with optional whitespace between them.
    pub fn longest_run(&self, text: &str) -> usize {
        let lowered = text.to_lowercase();
        let mut rest = lowered.as_str();
        let (mut run, mut best) = (0usize, 0usize);
        while let Some(c) = rest.chars().next() {
            if let Some(w) = self.words.iter().find(|w| rest.starts_with(w.as_str())) {
                run += 1;
                best = best.max(run);
                rest = &rest[w.len()..];
                continue;
            }
            if !(c.is_whitespace() && run > 0) {
                run = 0;
            }
            rest = &rest[c.len_utf8()..];
        }
        best
    }

    pub fn has_laughter(&self, text: &str) -> bool {
        self.longest_run(text) >= 2
    }
}

/// Laughter reward for one rollout.
///
/// Applies only when the text holds at least two consecutive laughter words
/// and the detector found a laughter segment. Then an empty transcript of
/// that segment (the recognizer deleted it) scores 1 and any transcribed
/// text scores 0.
pub fn laughter_reward(
    text: &str,
    lexicon: &LaughterLexicon,
    detector_segments: &[Segment],
    asr_segment_text: &str,
) -> LaughReward {
    if !lexicon.has_laughter(text) || detector_segments.is_empty() {
        return LaughReward::NotApplicable;
    }
    if asr_segment_text.trim().is_empty() {
        LaughReward::One
    } else {
        LaughReward::Zero
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg() -> [Segment; 1] {
        [Segment::new(0.5, 1.0).unwrap()]
    }

    #[test]
    fn examples() {
        let lex = LaughterLexicon::default();
        assert_eq!(laughter_reward("哈哈哈", &lex, &seg(), ""), LaughReward::One);
        assert_eq!(laughter_reward("哈哈", &lex, &seg(), "哈哈"), LaughReward::Zero);
        assert_eq!(
            laughter_reward("hello world", &lex, &seg(), ""),
            LaughReward::NotApplicable
        );
        assert_eq!(laughter_reward("哈哈", &lex, &[], ""), LaughReward::NotApplicable);
    }

    #[test]
    fn runs() {
        let lex = LaughterLexicon::default();
        assert_eq!(lex.longest_run("你好哈"), 1);
        assert_eq!(lex.longest_run("Ha ha, hey"), 2);
        assert_eq!(lex.longest_run("hahaha!"), 3);
        assert_eq!(lex.longest_run("哈 好 哈"), 1);
        assert!(!lex.has_laughter("hello"));
    }
}
