//! Language tags and the character classes shared by the text modules.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Supported transcript languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    /// Chinese: character-level units, CER.
    Zh,
    /// English: word-level units, WER.
    En,
}

impl Lang {
    /// Separator mark inserted when punctuation has to be added.
    pub fn default_comma(self) -> &'static str {
        match self {
            Lang::Zh => "，",
            Lang::En => ",",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lang::Zh => "zh",
            Lang::En => "en",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported language `{0}`")]
pub struct UnsupportedLanguage(pub alloc::string::String);

impl FromStr for Lang {
    type Err = UnsupportedLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zh" => Ok(Lang::Zh),
            "en" => Ok(Lang::En),
            other => Err(UnsupportedLanguage(other.into())),
        }
    }
}

const CJK_PUNCTUATION: &[char] = &[
    '，', '。', '！', '？', '；', '：', '、', '“', '”', '‘', '’', '（', '）', '《', '》', '【', '】', '「', '」', '『',
    '』', '…', '\u{2014}', '·', '～', '〈', '〉', '．', '－',
];

/// Punctuation marks recognized by normalization and punctuation repair.
///
/// `core` carries no Unicode general-category tables, so this is ASCII
/// punctuation plus the common CJK and full-width marks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || CJK_PUNCTUATION.contains(&c)
}

/// Sentence-final marks that punctuation repair never removes.
pub fn is_terminal_punctuation(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？' | '…')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_language_tags() {
        assert_eq!("zh".parse::<Lang>(), Ok(Lang::Zh));
        assert_eq!(" EN ".parse::<Lang>(), Ok(Lang::En));
        assert!("fr".parse::<Lang>().is_err());
    }

    #[test]
    fn punctuation_classes() {
        assert!(is_punctuation(','));
        assert!(is_punctuation('，'));
        assert!(!is_punctuation('好'));
        assert!(!is_punctuation('☃'));
        assert!(is_terminal_punctuation('。'));
        assert!(!is_terminal_punctuation('，'));
    }
}
