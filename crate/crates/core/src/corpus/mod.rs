//! Document model, streaming corpus I/O and token counting.

mod filter;
mod io;
mod tokens;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use filter::{Filtered, Retention, RetentionHandle};
pub use io::{read_corpus, read_records, write_corpus, CorpusReader, CorpusWriter};
pub use tokens::{count_tokens, pretokenize, word_tokens, TokenCounter, TokenScheme};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("document text is empty")]
    EmptyText,
    #[error("unknown source tag {0:?}")]
    UnknownSource(String),
    #[error("token counter configuration: {0}")]
    Config(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Origin of a document; one value per component of the finished corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Web,
    Synthetic,
    Code,
    Textbook,
    TranslatedCode,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Web,
        Source::Synthetic,
        Source::Code,
        Source::Textbook,
        Source::TranslatedCode,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Source::Web => "web",
            Source::Synthetic => "synthetic",
            Source::Code => "code",
            Source::Textbook => "textbook",
            Source::TranslatedCode => "translated_code",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Source::ALL
            .into_iter()
            .find(|src| src.tag() == s)
            .ok_or_else(|| CorpusError::UnknownSource(s.to_string()))
    }
}

/// One corpus item. Immutable once constructed; the id is derived from
/// the source tag and the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source: Source,
    pub text: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    #[serde(default)]
    pub token_count: Option<u64>,
}

impl Document {
    pub fn new(source: Source, text: impl Into<String>) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText);
        }
        Ok(Document {
            id: document_id(source, &text),
            source,
            text,
            meta: BTreeMap::new(),
            token_count: None,
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn with_token_count(mut self, count: u64) -> Self {
        self.token_count = Some(count);
        self
    }
}

/// 128-bit content id: SHA-256 over `source tag || 0x00 || text`, truncated
/// and hex encoded.
pub fn document_id(source: Source, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(source.tag().as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    hex::encode(&digest[..16])
}

/// 128-bit hash of the text alone, used as the exact-duplicate key.
pub fn text_hash(text: &str) -> u128 {
    let digest = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    u128::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_depends_on_source_and_text() {
        let a = Document::new(Source::Web, "x + y").unwrap();
        let b = Document::new(Source::Web, "x + y").unwrap();
        let c = Document::new(Source::Code, "x + y").unwrap();
        assert_eq!(a.id, b.id);
        assert_ne!(a.id, c.id);
        assert_eq!(a.id.len(), 32);
    }

    #[test]
    fn whitespace_only_text_is_rejected() {
        assert!(matches!(
            Document::new(Source::Web, " \n\t"),
            Err(CorpusError::EmptyText)
        ));
    }

    #[test]
    fn source_tags_round_trip() {
        for src in Source::ALL {
            assert_eq!(src.tag().parse::<Source>().unwrap(), src);
        }
        assert!("books".parse::<Source>().is_err());
    }
}
