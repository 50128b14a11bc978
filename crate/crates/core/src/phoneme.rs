//! Phoneme-level input: lexicons of words needing explicit pronunciation,
//! dictionary G2P and the hybrid phoneme+text sequences built from them.
//!
//! Training text gets a random subset of its ordinary characters swapped for
//! phonemes; lexicon entries always stay as text there. At inference the
//! opposite holds: lexicon entries (polyphones, rare characters) become
//! phonemes and everything else stays text.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::qa::{edit_distance, error_rate, QaError};
use crate::text::{is_punctuation, Lang};

/// Pronunciation emitted for units missing from every dictionary.
pub const UNK_PHONEME: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhonemeError {
    #[error("lexicon surface is empty")]
    EmptySurface,
    #[error("no phonemes given for `{0}`")]
    EmptyPhonemes(String),
    #[error("invalid augmentation parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Polyphone,
    Rare,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub phonemes: Vec<String>,
    pub kind: EntryKind,
}

/// Surfaces whose pronunciation is pinned. Lookups are longest-match.
///
/// Reads may be shared freely; `insert`/`remove` need `&mut` and so are
/// serialized by the borrow checker or by the caller's lock.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, LexiconEntry>,
    max_chars: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace; returns the previous entry for `surface`.
    pub fn insert(
        &mut self,
        surface: impl Into<String>,
        phonemes: Vec<String>,
        kind: EntryKind,
    ) -> Result<Option<LexiconEntry>, PhonemeError> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(PhonemeError::EmptySurface);
        }
        if phonemes.is_empty() || phonemes.iter().any(String::is_empty) {
            return Err(PhonemeError::EmptyPhonemes(surface));
        }
        self.max_chars = self.max_chars.max(surface.chars().count());
        Ok(self.entries.insert(surface, LexiconEntry { phonemes, kind }))
    }

    pub fn remove(&mut self, surface: &str) -> Option<LexiconEntry> {
        let removed = self.entries.remove(surface)?;
        if surface.chars().count() == self.max_chars {
            self.max_chars = self.entries.keys().map(|k| k.chars().count()).max().unwrap_or(0);
        }
        Some(removed)
    }

    pub fn get(&self, surface: &str) -> Option<&LexiconEntry> {
        self.entries.get(surface)
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.entries.contains_key(surface)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LexiconEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Longest entry starting at `units[start]`, as `(unit count, entry)`.
    /// Matches begin and end on pronounceable units.
    pub fn longest_match(&self, units: &[TextUnit<'_>], start: usize) -> Option<(usize, &LexiconEntry)> {
        if self.entries.is_empty() || !units.get(start)?.class.is_pronounceable() {
            return None;
        }
        let mut surface = String::new();
        let mut chars = 0;
        let mut best = None;
        for (len, unit) in units[start..].iter().enumerate() {
            chars += unit.text.chars().count();
            if chars > self.max_chars {
                break;
            }
            surface.push_str(unit.text);
            if unit.class.is_pronounceable() {
                if let Some(entry) = self.entries.get(&surface) {
                    best = Some((len + 1, entry));
                }
            }
        }
        best
    }
}

/// Fallback per-unit pronunciations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaseDict {
    entries: BTreeMap<String, Vec<String>>,
}

impl BaseDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, unit: impl Into<String>, phonemes: Vec<String>) {
        self.entries.insert(unit.into(), phonemes);
    }

    /// Exact lookup, then lowercase.
    pub fn lookup(&self, unit: &str) -> Option<&[String]> {
        self.entries
            .get(unit)
            .or_else(|| self.entries.get(&unit.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitClass {
    Letter,
    /// Digits and other non-letter symbols; they get a pronunciation but are
    /// never swapped at random.
    Symbol,
    Punct,
    Space,
}

impl UnitClass {
    pub fn is_pronounceable(self) -> bool {
        matches!(self, UnitClass::Letter | UnitClass::Symbol)
    }

    fn of(c: char) -> Self {
        if c.is_whitespace() {
            UnitClass::Space
        } else if is_punctuation(c) {
            UnitClass::Punct
        } else if c.is_alphabetic() {
            UnitClass::Letter
        } else {
            UnitClass::Symbol
        }
    }
}

/// One unit of source text; `offset` counts chars from the text start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextUnit<'a> {
    pub text: &'a str,
    pub offset: usize,
    pub class: UnitClass,
}

/// Split `text` into units that concatenate back to it exactly: single
/// characters for Chinese; letter runs, digit runs, whitespace runs and single
/// punctuation or symbols for English.
pub fn text_units(text: &str, lang: Lang) -> Vec<TextUnit<'_>> {
    let mut units: Vec<TextUnit<'_>> = Vec::new();
    // (byte start, char offset, class) of the unit being grown.
    let mut open: Option<(usize, usize, UnitClass)> = None;
    let mut prev: Option<char> = None;
    for (offset, (byte, c)) in text.char_indices().enumerate() {
        let mut class = UnitClass::of(c);
        if lang == Lang::En && c == '\'' && prev.is_some_and(char::is_alphabetic) {
            class = UnitClass::Letter;
        }
        let numeric_run = c.is_numeric() && prev.is_some_and(char::is_numeric);
        prev = Some(c);
        let extends = lang == Lang::En
            && matches!(open, Some((_, _, open_class)) if open_class == class)
            && (class == UnitClass::Space || class == UnitClass::Letter || (class == UnitClass::Symbol && numeric_run));
        if extends {
            continue;
        }
        if let Some((start, off, cls)) = open.take() {
            units.push(TextUnit {
                text: &text[start..byte],
                offset: off,
                class: cls,
            });
        }
        open = Some((byte, offset, class));
    }
    if let Some((start, off, cls)) = open {
        units.push(TextUnit {
            text: &text[start..],
            offset: off,
            class: cls,
        });
    }
    units
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PronSource {
    /// Part of the lexicon match covering `units[start..start + len]`.
    Lexicon {
        kind: EntryKind,
        start: usize,
        len: usize,
    },
    Base,
    Unk,
    /// Whitespace and punctuation.
    Silent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitPron {
    pub phonemes: Vec<String>,
    pub source: PronSource,
}

/// Dictionary G2P: one entry per text unit. Lexicon matches win over the
/// base dictionary; a multi-unit match hands one phoneme to each
/// pronounceable unit when the counts agree and the whole sequence to its
/// first unit otherwise.
pub fn g2p(units: &[TextUnit<'_>], lexicon: &Lexicon, base: &BaseDict) -> Vec<UnitPron> {
    let mut out = Vec::with_capacity(units.len());
    let mut i = 0;
    while i < units.len() {
        if let Some((len, entry)) = lexicon.longest_match(units, i) {
            let span = &units[i..i + len];
            let speakable = span.iter().filter(|u| u.class.is_pronounceable()).count();
            let source = PronSource::Lexicon {
                kind: entry.kind,
                start: i,
                len,
            };
            let mut phonemes = entry.phonemes.iter();
            let mut first = true;
            for unit in span {
                let assigned: Vec<String> = if !unit.class.is_pronounceable() {
                    Vec::new()
                } else if entry.phonemes.len() == speakable {
                    phonemes.next().cloned().into_iter().collect()
                } else if first {
                    entry.phonemes.clone()
                } else {
                    Vec::new()
                };
                if unit.class.is_pronounceable() {
                    first = false;
                }
                out.push(UnitPron {
                    phonemes: assigned,
                    source,
                });
            }
            i += len;
            continue;
        }
        let unit = &units[i];
        out.push(if !unit.class.is_pronounceable() {
            UnitPron {
                phonemes: Vec::new(),
                source: PronSource::Silent,
            }
        } else if let Some(p) = base.lookup(unit.text) {
            UnitPron {
                phonemes: p.to_vec(),
                source: PronSource::Base,
            }
        } else {
            UnitPron {
                phonemes: alloc::vec![String::from(UNK_PHONEME)],
                source: PronSource::Unk,
            }
        });
        i += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UnitKind {
    Text,
    Phoneme,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridUnit {
    pub kind: UnitKind,
    /// Source text for TEXT units, space-separated phonemes for PHONEME units.
    pub payload: String,
    pub origin_index: usize,
    /// Source text replaced by a PHONEME unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
}

impl HybridUnit {
    fn text(unit: &TextUnit<'_>) -> Self {
        Self {
            kind: UnitKind::Text,
            payload: unit.text.into(),
            origin_index: unit.offset,
            surface: None,
        }
    }

    /// Source text this unit stands for.
    pub fn source_text(&self) -> &str {
        match self.kind {
            UnitKind::Text => &self.payload,
            UnitKind::Phoneme => self.surface.as_deref().unwrap_or(""),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HybridSequence {
    pub units: Vec<HybridUnit>,
}

impl HybridSequence {
    /// The original text.
    pub fn reconstruct(&self) -> String {
        self.units.iter().map(HybridUnit::source_text).collect()
    }

    /// Text with PHONEME units shown as `surface{phonemes}`.
    pub fn render_bracketed(&self) -> String {
        let mut out = String::new();
        for u in &self.units {
            match u.kind {
                UnitKind::Text => out.push_str(&u.payload),
                UnitKind::Phoneme => {
                    out.push_str(u.source_text());
                    out.push('{');
                    out.push_str(&u.payload);
                    out.push('}');
                }
            }
        }
        out
    }

    pub fn phoneme_units(&self) -> impl Iterator<Item = &HybridUnit> {
        self.units.iter().filter(|u| u.kind == UnitKind::Phoneme)
    }
}

fn join_phonemes<'a>(parts: impl Iterator<Item = &'a String>) -> String {
    let mut out = String::new();
    for p in parts {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(p);
    }
    out
}

/// Inference-time input: every lexicon match becomes one PHONEME unit with
/// the G2P pronunciation, all other units stay TEXT. Deterministic.
pub fn inference_hybridize(text: &str, lang: Lang, lexicon: &Lexicon, base: &BaseDict) -> HybridSequence {
    let units = text_units(text, lang);
    let prons = g2p(&units, lexicon, base);
    let mut out = Vec::with_capacity(units.len());
    let mut i = 0;
    while i < units.len() {
        if let PronSource::Lexicon { start, len, .. } = prons[i].source {
            debug_assert_eq!(start, i);
            let span = start..start + len;
            out.push(HybridUnit {
                kind: UnitKind::Phoneme,
                payload: join_phonemes(prons[span.clone()].iter().flat_map(|p| p.phonemes.iter())),
                origin_index: units[start].offset,
                surface: Some(units[span].iter().map(|u| u.text).collect()),
            });
            i += len;
        } else {
            out.push(HybridUnit::text(&units[i]));
            i += 1;
        }
    }
    HybridSequence { units: out }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Probability that an utterance gets any replacement.
    pub p: f64,
    /// Upper end of the uniform replacement ratio.
    pub max_ratio: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self { p: 0.2, max_ratio: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub sequence: HybridSequence,
    pub triggered: bool,
    /// Ratio drawn in stage two; 0 when not triggered.
    pub ratio: f64,
    pub eligible: usize,
    pub replaced: usize,
}

/// Training augmentation.
///
/// Stage one draws `u ~ U[0, 1)` and triggers when `u < p`. Stage two draws
/// `ratio = max_ratio * U[0, 1)`, sets `k = floor(ratio * n_eligible)` and
/// picks `k` eligible units by a partial Fisher-Yates shuffle
/// (`gen_range(i..n)` for `i in 0..k`). Eligible units are letters with a
/// base-dictionary pronunciation outside every lexicon match.
pub fn train_augment<R: Rng + ?Sized>(
    text: &str,
    lang: Lang,
    rng: &mut R,
    params: &AugmentParams,
    lexicon: &Lexicon,
    base: &BaseDict,
) -> Result<Augmented, PhonemeError> {
    if !(0.0..=1.0).contains(&params.p) {
        return Err(PhonemeError::InvalidParameter("p must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&params.max_ratio) {
        return Err(PhonemeError::InvalidParameter("max_ratio must lie in [0, 1]"));
    }
    let units = text_units(text, lang);
    let prons = g2p(&units, lexicon, base);
    let mut eligible: Vec<usize> = (0..units.len())
        .filter(|&i| units[i].class == UnitClass::Letter && prons[i].source == PronSource::Base)
        .collect();
    let n = eligible.len();

    let triggered = rng.gen::<f64>() < params.p;
    let mut ratio = 0.0;
    let mut chosen: Vec<usize> = Vec::new();
    if triggered {
        ratio = rng.gen::<f64>() * params.max_ratio;
        let k = libm::floor(ratio * n as f64) as usize;
        for i in 0..k {
            let j = rng.gen_range(i..n);
            eligible.swap(i, j);
        }
        chosen = eligible[..k].to_vec();
        chosen.sort_unstable();
    }

    let units_out = units
        .iter()
        .enumerate()
        .map(|(i, unit)| {
            if chosen.binary_search(&i).is_ok() {
                HybridUnit {
                    kind: UnitKind::Phoneme,
                    payload: join_phonemes(prons[i].phonemes.iter()),
                    origin_index: unit.offset,
                    surface: Some(unit.text.into()),
                }
            } else {
                HybridUnit::text(unit)
            }
        })
        .collect();
    Ok(Augmented {
        sequence: HybridSequence { units: units_out },
        triggered,
        ratio,
        eligible: n,
        replaced: chosen.len(),
    })
}

/// Phoneme error rate over symbol sequences.
pub fn per<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64, QaError> {
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    error_rate(&edit_distance(&r, &h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::SeedableRng;

    fn ph(s: &str) -> Vec<String> {
        s.split_whitespace().map(ToString::to_string).collect()
    }

    fn base() -> BaseDict {
        let mut b = BaseDict::new();
        for (c, p) in [
            ("重", "chong2"),
            ("要", "yao4"),
            ("你", "ni3"),
            ("好", "hao3"),
            ("行", "xing2"),
        ] {
            b.insert(c, ph(p));
        }
        b
    }

    fn lexicon() -> Lexicon {
        let mut l = Lexicon::new();
        l.insert("重要", ph("zhong4 yao4"), EntryKind::Polyphone).unwrap();
        l.insert("行", ph("hang2"), EntryKind::Polyphone).unwrap();
        l
    }

    #[test]
    fn units_reconstruct() {
        for (text, lang) in [("Hello, world! It's 2024.", Lang::En), ("你好，世界 ok", Lang::Zh)] {
            let units = text_units(text, lang);
            let joined: String = units.iter().map(|u| u.text).collect();
            assert_eq!(joined, text);
        }
        let en = text_units("It's 42!", Lang::En);
        let texts: Vec<&str> = en.iter().map(|u| u.text).collect();
        assert_eq!(texts, ["It's", " ", "42", "!"]);
        assert_eq!(en[2].class, UnitClass::Symbol);
        assert_eq!(en[2].offset, 5);
    }

    #[test]
    fn lexicon_add_remove() {
        let mut l = Lexicon::new();
        assert!(l.is_empty());
        l.insert("重", ph("zhong4"), EntryKind::Polyphone).unwrap();
        assert!(l.contains("重"));
        l.remove("重");
        assert!(!l.contains("重"));
        let units = text_units("重", Lang::Zh);
        assert!(l.longest_match(&units, 0).is_none());
        assert!(l.insert("", ph("a"), EntryKind::Rare).is_err());
        assert!(l.insert("a", vec![], EntryKind::Rare).is_err());
    }

    #[test]
    fn g2p_base_only() {
        let units = text_units("你好", Lang::Zh);
        let p = g2p(&units, &Lexicon::new(), &base());
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].phonemes, ph("ni3"));
        assert_eq!(p[1].phonemes, ph("hao3"));
        assert!(p.iter().all(|u| u.source == PronSource::Base));
    }

    #[test]
    fn g2p_lexicon_overrides_span() {
        let units = text_units("重要你", Lang::Zh);
        let p = g2p(&units, &lexicon(), &base());
        assert_eq!(p[0].phonemes, ph("zhong4"));
        assert_eq!(p[1].phonemes, ph("yao4"));
        assert!(matches!(p[0].source, PronSource::Lexicon { start: 0, len: 2, .. }));
        assert_eq!(p[2].source, PronSource::Base);
    }

    #[test]
    fn g2p_unknown_symbol() {
        let units = text_units("☃", Lang::Zh);
        let p = g2p(&units, &Lexicon::new(), &base());
        assert_eq!(p[0].phonemes, [UNK_PHONEME]);
        assert_eq!(p[0].source, PronSource::Unk);
    }

    #[test]
    fn inference_cases() {
        let (l, b) = (lexicon(), base());
        let plain = inference_hybridize("你好", Lang::Zh, &l, &b);
        assert!(plain.phoneme_units().next().is_none());

        let one = inference_hybridize("你行", Lang::Zh, &l, &b);
        let phon: Vec<_> = one.phoneme_units().collect();
        assert_eq!(phon.len(), 1);
        assert_eq!(phon[0].payload, "hang2");
        assert_eq!(phon[0].origin_index, 1);

        let all = inference_hybridize("重要行", Lang::Zh, &l, &b);
        assert!(all.units.iter().all(|u| u.kind == UnitKind::Phoneme));
        assert_eq!(all.render_bracketed(), "重要{zhong4 yao4}行{hang2}");
        assert_eq!(all.reconstruct(), "重要行");
    }

    #[test]
    fn augment_never_triggers_with_zero_p() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let params = AugmentParams { p: 0.0, max_ratio: 0.5 };
        for _ in 0..100 {
            let a = train_augment("你好你好", Lang::Zh, &mut rng, &params, &Lexicon::new(), &base()).unwrap();
            assert!(!a.triggered);
            assert!(a.sequence.units.iter().all(|u| u.kind == UnitKind::Text));
        }
        let d = AugmentParams::default();
        assert_eq!((d.p, d.max_ratio), (0.2, 0.5));
    }

    #[test]
    fn augment_rejects_bad_params() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let bad = AugmentParams { p: 1.5, max_ratio: 0.5 };
        assert!(train_augment("你", Lang::Zh, &mut rng, &bad, &Lexicon::new(), &base()).is_err());
    }

    #[test]
    fn augment_matches_generator_replay() {
        // 重要 is protected, leaving 你 好 你 好 eligible at offsets 2..6.
        let text = "重要你好你好";
        let params = AugmentParams { p: 1.0, max_ratio: 1.0 };
        let mut seen_two = false;
        for seed in 0..64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut oracle = rng.clone();
            let a = train_augment(text, Lang::Zh, &mut rng, &params, &lexicon(), &base()).unwrap();

            assert!(oracle.gen::<f64>() < 1.0);
            let ratio = oracle.gen::<f64>();
            let k = (ratio * 4.0) as usize;
            let mut slots = [2usize, 3, 4, 5];
            for i in 0..k {
                let j = oracle.gen_range(i..4);
                slots.swap(i, j);
            }
            let mut want: Vec<usize> = slots[..k].to_vec();
            want.sort_unstable();
            let got: Vec<usize> = a.sequence.phoneme_units().map(|u| u.origin_index).collect();
            assert_eq!(a.eligible, 4);
            assert_eq!(got, want, "seed {seed}");
            seen_two |= (0.5..0.75).contains(&ratio) && got.len() == 2;
        }
        assert!(seen_two);
    }

    #[test]
    fn per_examples() {
        assert_eq!(per(&ph("a b c"), &ph("a b c")), Ok(0.0));
        let r = ph("a b c d e f g h i j");
        let h = ph("a b c d e f g h i x");
        assert!((per(&r, &h).unwrap() - 0.1).abs() < 1e-15);
        assert!(per(&ph(""), &ph("a")).is_err());
    }
}
