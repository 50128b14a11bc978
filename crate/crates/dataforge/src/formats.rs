//! Text file formats: TSV vocabularies and lexicons, JSON and JSONL records.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use dataforge_core::phoneme::{BaseDict, EntryKind, Lexicon};
use dataforge_core::punct::CharAlignment;
use dataforge_core::text::Lang;
use dataforge_core::vocab::VocabEntry;

use crate::Error;

const BUNDLED_BASE_DICT: &str = include_str!("../data/base_dict.tsv");
const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{source_name}:{line}: {message}")]
pub struct ParseError {
    pub source_name: String,
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Self {
            source_name: source_name.to_owned(),
            line,
            message: message.into(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines that are not `#` comments, numbered from 1.
fn content_lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

/// `token_id<TAB>surface` per line.
pub fn parse_vocab(src: &str, source_name: &str) -> Result<Vec<VocabEntry>, ParseError> {
    content_lines(src)
        .map(|(n, line)| {
            let (id, surface) = line
                .split_once('\t')
                .ok_or_else(|| ParseError::new(source_name, n, "expected token_id<TAB>surface"))?;
            let id: u32 = id
                .trim()
                .parse()
                .map_err(|_| ParseError::new(source_name, n, format!("bad token id {id:?}")))?;
            VocabEntry::new(id, surface).map_err(|e| ParseError::new(source_name, n, e.to_string()))
        })
        .collect()
}

pub fn format_vocab(entries: &[VocabEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\n", e.token_id(), e.surface()))
        .collect()
}

/// A parsed lexicon and the duplicate-surface warnings met on the way.
#[derive(Debug, Clone, Default)]
pub struct LexiconLoad {
    pub lexicon: Lexicon,
    pub warnings: Vec<String>,
}

/// `surface<TAB>phonemes<TAB>kind` per line; phonemes are space separated
/// and kind is `polyphone` or `rare`. A repeated surface replaces the
/// earlier entry and is reported as a warning.
pub fn parse_lexicon(src: &str, source_name: &str) -> Result<LexiconLoad, ParseError> {
    let mut load = LexiconLoad::default();
    for (n, line) in content_lines(src) {
        let fields: Vec<&str> = line.split('\t').collect();
        let [surface, phonemes, kind] = fields[..] else {
            return Err(ParseError::new(
                source_name,
                n,
                "expected surface<TAB>phonemes<TAB>kind",
            ));
        };
        let kind = match kind.trim() {
            "polyphone" => EntryKind::Polyphone,
            "rare" => EntryKind::Rare,
            other => return Err(ParseError::new(source_name, n, format!("unknown entry kind {other:?}"))),
        };
        let phonemes = phonemes.split_whitespace().map(str::to_owned).collect();
        let previous = load
            .lexicon
            .insert(surface.trim(), phonemes, kind)
            .map_err(|e| ParseError::new(source_name, n, e.to_string()))?;
        if previous.is_some() {
            let msg = format!(
                "{source_name}:{n}: duplicate lexicon surface {:?}, later entry wins",
                surface.trim()
            );
            log::warn!("{msg}");
            load.warnings.push(msg);
        }
    }
    Ok(load)
}

/// `unit<TAB>phonemes` per line.
pub fn parse_base_dict(src: &str, source_name: &str) -> Result<BaseDict, ParseError> {
    let mut dict = BaseDict::new();
    for (n, line) in content_lines(src) {
        let (unit, phonemes) = line
            .split_once('\t')
            .ok_or_else(|| ParseError::new(source_name, n, "expected unit<TAB>phonemes"))?;
        let phonemes: Vec<String> = phonemes.split_whitespace().map(str::to_owned).collect();
        if unit.trim().is_empty() || phonemes.is_empty() {
            return Err(ParseError::new(source_name, n, "empty unit or pronunciation"));
        }
        dict.insert(unit.trim(), phonemes);
    }
    Ok(dict)
}

/// Small built-in pinyin and ARPAbet dictionary.
pub fn bundled_base_dict() -> BaseDict {
    parse_base_dict(BUNDLED_BASE_DICT, "base_dict.tsv").expect("bundled dictionary parses")
}

pub fn bundled_lexicon() -> Lexicon {
    parse_lexicon(BUNDLED_LEXICON, "lexicon.tsv")
        .expect("bundled lexicon parses")
        .lexicon
}

/// One JSON value per non-blank line.
pub fn parse_jsonl<T: DeserializeOwned>(src: &str, source_name: &str) -> Result<Vec<T>, ParseError> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ParseError::new(source_name, i + 1, e.to_string())))
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_json<T: DeserializeOwned>(src: &str, source_name: &str) -> Result<T, ParseError> {
    serde_json::from_str(src).map_err(|e| ParseError::new(source_name, e.line(), e.to_string()))
}

/// Character alignments as a JSON array or as JSONL.
pub fn parse_alignment(src: &str, source_name: &str) -> Result<Vec<CharAlignment>, ParseError> {
    if src.trim_start().starts_with('[') {
        parse_json(src, source_name)
    } else {
        parse_jsonl(src, source_name)
    }
}

/// One source utterance of a pipeline manifest. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub entry_id: String,
    pub audio: String,
    pub speaker_id: String,
    pub text: String,
    pub lang: Lang,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<String>,
}

/// QA verdict for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub utt_id: String,
    pub rates: [f64; 2],
    pub kept: bool,
    pub threshold: f64,
}

pub fn parse_manifest(src: &str, source_name: &str) -> Result<Vec<SourceEntry>, ParseError> {
    let entries: Vec<SourceEntry> = parse_jsonl(src, source_name)?;
    let mut seen = std::collections::BTreeSet::new();
    for (i, e) in entries.iter().enumerate() {
        if !seen.insert(e.entry_id.as_str()) {
            return Err(ParseError::new(
                source_name,
                i + 1,
                format!("duplicate entry id {:?}", e.entry_id),
            ));
        }
        if e.entry_id.contains(':') || e.entry_id.contains('/') || e.entry_id.is_empty() {
            return Err(ParseError::new(
                source_name,
                i + 1,
                "entry ids must be non-empty without ':' or '/'",
            ));
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_round_trip() {
        let v = parse_vocab("1\t你好\n# comment\n\n2\tworld\n", "v").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(format_vocab(&v), "1\t你好\n2\tworld\n");
        let err = parse_vocab("1 你好\n", "v").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn lexicon_duplicates_warn() {
        let load = parse_lexicon("行\tx ing2\tpolyphone\n行\th ang2\tpolyphone\n", "lex").unwrap();
        assert_eq!(load.lexicon.len(), 1);
        assert_eq!(load.lexicon.get("行").unwrap().phonemes, ["h", "ang2"]);
        assert_eq!(load.warnings.len(), 1);
        assert_eq!(parse_lexicon("x\ty\tcommon\n", "lex").unwrap_err().line, 1);
        assert_eq!(parse_lexicon("x\ty\n", "lex").unwrap_err().line, 1);
    }

    #[test]
    fn bundled_data_parses() {
        assert!(bundled_base_dict().lookup("你").is_some());
        assert!(bundled_base_dict().lookup("Hello").is_some());
        assert!(bundled_lexicon().contains("银行"));
    }

    #[test]
    fn alignment_forms() {
        let a = parse_alignment(r#"[{"char":"你","start_s":0.0,"end_s":0.1}]"#, "a").unwrap();
        let b = parse_alignment("{\"char\":\"你\",\"start_s\":0.0,\"end_s\":0.1}\n", "a").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let line = r#"{"entry_id":"a","audio":"a.wav","speaker_id":"s","text":"t","lang":"en"}"#;
        assert_eq!(parse_manifest(line, "m").unwrap().len(), 1);
        let err = parse_manifest(&format!("{line}\n{line}\n"), "m").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(parse_manifest("{\"entry_id\":1}", "m").is_err());
        assert!(parse_manifest("", "m").unwrap().is_empty());
    }
}
