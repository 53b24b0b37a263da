use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use base64::Engine;
use regex::Regex;

use super::CorpusError;

/// Lowercased word tokens with surrounding punctuation stripped. Shared by
/// the classifier features and the decontamination shingles.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
            (!word.is_empty()).then(|| word.to_lowercase())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenScheme {
    Whitespace,
    Bpe,
}

/// Byte-level BPE ranks in the tiktoken text format: one `<base64 token> <rank>`
/// pair per line. Lower rank merges first.
#[derive(Debug, Default)]
pub struct BpeRanks {
    ranks: HashMap<Vec<u8>, u32>,
}

impl BpeRanks {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Self, CorpusError> {
        let mut ranks = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (tok, rank) = line
                .split_once(' ')
                .ok_or_else(|| CorpusError::Config(format!("vocab line {}: expected `<token> <rank>`", i + 1)))?;
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(tok)
                .map_err(|e| CorpusError::Config(format!("vocab line {}: {e}", i + 1)))?;
            let rank: u32 = rank
                .trim()
                .parse()
                .map_err(|e| CorpusError::Config(format!("vocab line {}: {e}", i + 1)))?;
            ranks.insert(bytes, rank);
        }
        if ranks.is_empty() {
            return Err(CorpusError::Config("vocabulary is empty".into()));
        }
        Ok(BpeRanks { ranks })
    }

    pub fn from_pairs<I: IntoIterator<Item = (Vec<u8>, u32)>>(pairs: I) -> Self {
        BpeRanks {
            ranks: pairs.into_iter().collect(),
        }
    }

    fn rank(&self, bytes: &[u8]) -> Option<u32> {
        self.ranks.get(bytes).copied()
    }

    /// Number of tokens the byte-pair merge produces for one piece.
    fn count_piece(&self, piece: &[u8]) -> usize {
        if piece.len() <= 1 || self.rank(piece).is_some() {
            return piece.len().min(1);
        }
        // boundaries[i] is the start offset of part i; the last entry is the end
        let mut boundaries: Vec<usize> = (0..=piece.len()).collect();
        loop {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..boundaries.len().saturating_sub(2) {
                if let Some(r) = self.rank(&piece[boundaries[i]..boundaries[i + 2]]) {
                    if best.is_none_or(|(br, _)| r < br) {
                        best = Some((r, i));
                    }
                }
            }
            match best {
                Some((_, i)) => {
                    boundaries.remove(i + 1);
                }
                None => break,
            }
        }
        boundaries.len() - 1
    }
}

static PRETOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i:'s|'t|'re|'ve|'m|'ll|'d)| ?\p{L}+| ?\p{N}{1,3}| ?[^\s\p{L}\p{N}]+|\s+")
        .expect("valid pretokenizer pattern")
});

/// Split text into pre-tokenization pieces before byte-pair merging.
pub fn pretokenize(text: &str) -> impl Iterator<Item = &str> {
    PRETOKEN.find_iter(text).map(|m| m.as_str())
}

/// Pluggable token counter: whitespace+punctuation by default, or byte-level
/// BPE over a user-supplied rank table.
#[derive(Debug, Clone)]
pub struct TokenCounter {
    scheme: TokenScheme,
    vocab: Option<Arc<BpeRanks>>,
}

impl Default for TokenCounter {
    fn default() -> Self {
        Self::whitespace()
    }
}

impl TokenCounter {
    pub fn new(scheme: TokenScheme, vocab: Option<BpeRanks>) -> Result<Self, CorpusError> {
        if scheme == TokenScheme::Bpe && vocab.is_none() {
            return Err(CorpusError::Config("bpe scheme requires a vocabulary".into()));
        }
        Ok(TokenCounter {
            scheme,
            vocab: vocab.map(Arc::new),
        })
    }

    pub fn whitespace() -> Self {
        TokenCounter {
            scheme: TokenScheme::Whitespace,
            vocab: None,
        }
    }

    pub fn bpe_from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::new(TokenScheme::Bpe, Some(BpeRanks::from_file(path)?))
    }

    pub fn scheme(&self) -> TokenScheme {
        self.scheme
    }

    pub fn count(&self, text: &str) -> usize {
        match (self.scheme, &self.vocab) {
            (TokenScheme::Bpe, Some(vocab)) => pretokenize(text).map(|piece| vocab.count_piece(piece.as_bytes())).sum(),
            _ => count_whitespace_punct(text),
        }
    }
}

pub fn count_tokens(counter: &TokenCounter, text: &str) -> usize {
    counter.count(text)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Maximal runs of word characters count once; every other non-whitespace
/// character counts as its own token.
fn count_whitespace_punct(text: &str) -> usize {
    text.split_whitespace()
        .map(|chunk| {
            let mut n = 0;
            let mut in_word = false;
            for c in chunk.chars() {
                if is_word_char(c) {
                    if !in_word {
                        n += 1;
                        in_word = true;
                    }
                } else {
                    n += 1;
                    in_word = false;
                }
            }
            n
        })
        .sum()
}
