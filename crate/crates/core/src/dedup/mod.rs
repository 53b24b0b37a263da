//! Exact deduplication and 13-gram benchmark decontamination.
//!
//! A document is dropped as contaminated when a benchmark question occurs in
//! it verbatim (after whitespace normalization) or when its 13-gram
//! similarity to some question is strictly above the threshold. Candidate
//! questions come from an inverted shingle index; every question sharing at
//! least one shingle with the document is a candidate and is scored exactly,
//! so the indexed result equals exhaustive scoring.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};

use crate::classifier::hash_joined;
use crate::corpus::{read_records, text_hash, word_tokens, CorpusError, Document, Filtered};
use crate::par::OrderedMap;

pub const SHINGLE_SIZE: usize = 13;

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("decontamination configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Hashes of every run of 13 consecutive word tokens, sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    pub doc_id: String,
    pub shingles: Vec<u64>,
    pub token_count: usize,
}

impl ShingleSet {
    pub fn from_text(doc_id: impl Into<String>, text: &str) -> Self {
        let tokens = word_tokens(text);
        let mut shingles: Vec<u64> = tokens.windows(SHINGLE_SIZE).map(hash_joined).collect();
        shingles.sort_unstable();
        shingles.dedup();
        ShingleSet {
            doc_id: doc_id.into(),
            shingles,
            token_count: tokens.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.shingles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shingles.is_empty()
    }

    pub fn intersection_len(&self, other: &ShingleSet) -> usize {
        let (a, b) = (&self.shingles, &other.shingles);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    Jaccard,
    /// Overlap divided by the smaller set, so a long document that contains
    /// a short question scores high.
    #[default]
    Containment,
}

impl SimilarityMode {
    pub fn name(self) -> &'static str {
        match self {
            SimilarityMode::Jaccard => "jaccard",
            SimilarityMode::Containment => "containment",
        }
    }
}

impl fmt::Display for SimilarityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "jaccard" => Ok(SimilarityMode::Jaccard),
            "containment" => Ok(SimilarityMode::Containment),
            other => Err(format!("unknown similarity mode {other:?} (jaccard or containment)")),
        }
    }
}

/// Similarity in [0, 1]; 0 when either set is empty.
pub fn similarity_13gram(a: &ShingleSet, b: &ShingleSet, mode: SimilarityMode) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let common = a.intersection_len(b);
    let denom = match mode {
        SimilarityMode::Jaccard => a.len() + b.len() - common,
        SimilarityMode::Containment => a.len().min(b.len()),
    };
    common as f64 / denom as f64
}

/// Keep the first document with each text; order is preserved. Retention
/// counts are available through [`Filtered::handle`].
pub fn exact_dedup<I>(docs: I) -> Filtered<I::IntoIter, impl FnMut(&Document) -> bool>
where
    I: IntoIterator<Item = Document>,
{
    let mut seen: HashSet<u128> = HashSet::new();
    Filtered::new(docs.into_iter(), move |doc| seen.insert(text_hash(&doc.text)))
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone)]
pub struct BenchmarkQuestion {
    pub id: String,
    pub text: String,
    pub shingles: ShingleSet,
}

/// Evaluation questions plus a matcher for their verbatim occurrence.
#[derive(Debug, Clone)]
pub struct BenchmarkSet {
    pub name: String,
    pub questions: Vec<BenchmarkQuestion>,
    verbatim: AhoCorasick,
}

#[derive(Deserialize)]
struct QuestionRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(alias = "question", alias = "problem")]
    text: String,
}

impl BenchmarkSet {
    pub fn new<I, A, B>(name: impl Into<String>, questions: I) -> Result<Self, DedupError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut out = Vec::new();
        let mut patterns = Vec::new();
        for (id, text) in questions {
            let (id, text) = (id.into(), text.into());
            let normalized = normalize_ws(&text);
            if normalized.is_empty() {
                return Err(DedupError::Config(format!("benchmark question {id:?} has no text")));
            }
            patterns.push(normalized);
            out.push(BenchmarkQuestion {
                shingles: ShingleSet::from_text(id.clone(), &text),
                id,
                text,
            });
        }
        let verbatim = AhoCorasick::new(&patterns).map_err(|e| DedupError::Config(e.to_string()))?;
        Ok(BenchmarkSet {
            name: name.into(),
            questions: out,
            verbatim,
        })
    }

    /// Line-delimited records with a `text` (or `question`/`problem`) field
    /// and an optional `id`; the n-th record without one gets `<name>:<n>`.
    pub fn load(path: impl AsRef<Path>, name: impl Into<String>) -> Result<Self, DedupError> {
        let name = name.into();
        let mut questions = Vec::new();
        for (i, record) in read_records::<QuestionRecord>(path)?.enumerate() {
            let record = record?;
            let id = match record.id {
                Some(serde_json::Value::String(s)) => s,
                Some(other) => other.to_string(),
                None => format!("{name}:{}", i + 1),
            };
            questions.push((id, record.text));
        }
        Self::new(name, questions)
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Lowest-indexed question occurring verbatim in `text`.
    pub fn verbatim_match(&self, text: &str) -> Option<usize> {
        self.verbatim
            .find_overlapping_iter(&normalize_ws(text))
            .map(|m| m.pattern().as_usize())
            .min()
    }
}

/// Inverted index from shingle hash to the sets containing it.
#[derive(Debug, Clone, Default)]
pub struct CandidateIndex {
    postings: HashMap<u64, Vec<u32>>,
}

impl CandidateIndex {
    pub fn build<'a>(sets: impl IntoIterator<Item = &'a ShingleSet>) -> Self {
        let mut postings: HashMap<u64, Vec<u32>> = HashMap::new();
        for (i, set) in sets.into_iter().enumerate() {
            for &h in &set.shingles {
                postings.entry(h).or_default().push(i as u32);
            }
        }
        CandidateIndex { postings }
    }

    /// Positions of every indexed set sharing a shingle with `set`, ascending.
    pub fn query(&self, set: &ShingleSet) -> Vec<usize> {
        let mut hits: Vec<usize> = set
            .shingles
            .iter()
            .filter_map(|h| self.postings.get(h))
            .flatten()
            .map(|&i| i as usize)
            .collect();
        hits.sort_unstable();
        hits.dedup();
        hits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Exact,
    Ngram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub doc_id: String,
    pub question_id: String,
    /// Similarity to the triggering question in the configured mode (may be
    /// low for a verbatim hit on a short question).
    pub score: f64,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecontamConfig {
    pub threshold: f64,
    pub mode: SimilarityMode,
    pub workers: usize,
}

impl Default for DecontamConfig {
    fn default() -> Self {
        DecontamConfig {
            threshold: 0.6,
            mode: SimilarityMode::Containment,
            workers: crate::par::default_workers(),
        }
    }
}

pub struct Decontaminator {
    bench: BenchmarkSet,
    index: CandidateIndex,
    config: DecontamConfig,
}

impl Decontaminator {
    pub fn new(bench: BenchmarkSet, config: DecontamConfig) -> Result<Self, DedupError> {
        if !(config.threshold > 0.0 && config.threshold <= 1.0) {
            return Err(DedupError::Config(format!(
                "threshold must lie in (0, 1], got {}",
                config.threshold
            )));
        }
        let index = CandidateIndex::build(bench.questions.iter().map(|q| &q.shingles));
        Ok(Decontaminator { bench, index, config })
    }

    pub fn config(&self) -> &DecontamConfig {
        &self.config
    }

    pub fn benchmark(&self) -> &BenchmarkSet {
        &self.bench
    }

    /// Why `doc` must go, if it must. A verbatim hit wins over n-gram
    /// overlap; among n-gram hits the highest score wins, ties going to the
    /// earlier question.
    pub fn check(&self, doc: &Document) -> Option<Removal> {
        let shingles = ShingleSet::from_text(doc.id.clone(), &doc.text);
        self.decide(doc, &shingles, self.index.query(&shingles))
    }

    /// [`check`](Self::check) scoring every question, without the index.
    pub fn check_exhaustive(&self, doc: &Document) -> Option<Removal> {
        let shingles = ShingleSet::from_text(doc.id.clone(), &doc.text);
        self.decide(doc, &shingles, 0..self.bench.len())
    }

    fn decide(
        &self,
        doc: &Document,
        shingles: &ShingleSet,
        candidates: impl IntoIterator<Item = usize>,
    ) -> Option<Removal> {
        let mode = self.config.mode;
        let removal = |q: usize, score: f64, reason| Removal {
            doc_id: doc.id.clone(),
            question_id: self.bench.questions[q].id.clone(),
            score,
            reason,
        };
        if let Some(q) = self.bench.verbatim_match(&doc.text) {
            let score = similarity_13gram(shingles, &self.bench.questions[q].shingles, mode);
            return Some(removal(q, score, RemovalReason::Exact));
        }
        let mut best: Option<(usize, f64)> = None;
        for q in candidates {
            let score = similarity_13gram(shingles, &self.bench.questions[q].shingles, mode);
            if score > self.config.threshold && best.is_none_or(|(_, s)| score > s) {
                best = Some((q, score));
            }
        }
        best.map(|(q, score)| removal(q, score, RemovalReason::Ngram))
    }
}

/// Every document paired with its removal, if any, in input order.
pub fn decontaminate_stream<'a, I>(
    docs: I,
    dec: &'a Decontaminator,
) -> impl Iterator<Item = (Document, Option<Removal>)> + 'a
where
    I: IntoIterator<Item = Document>,
    I::IntoIter: 'a,
{
    let workers = dec.config.workers.max(1);
    OrderedMap::new(docs.into_iter(), workers, workers * 64, move |doc: Document| {
        let removal = dec.check(&doc);
        (doc, removal)
    })
}

/// Clean documents and the removal log.
pub fn decontaminate<I>(docs: I, dec: &Decontaminator) -> (Vec<Document>, Vec<Removal>)
where
    I: IntoIterator<Item = Document>,
{
    let mut clean = Vec::new();
    let mut removed = Vec::new();
    for (doc, removal) in decontaminate_stream(docs, dec) {
        match removal {
            Some(r) => removed.push(r),
            None => clean.push(doc),
        }
    }
    (clean, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;

    fn words(range: std::ops::Range<usize>) -> String {
        range.map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    fn set(text: &str) -> ShingleSet {
        ShingleSet::from_text("x", text)
    }

    fn doc(text: &str) -> Document {
        Document::new(Source::Web, text).unwrap()
    }

    #[test]
    fn shingle_counts() {
        assert!(set(&words(0..12)).is_empty());
        assert_eq!(set(&words(0..13)).len(), 1);
        assert_eq!(set(&words(0..20)).len(), 8);
        // repeated windows collapse
        assert_eq!(set(&"a ".repeat(30)).len(), 1);
    }

    #[test]
    fn shared_span_overlap() {
        // tokens 0..15 shared, then 5 distinct tokens each
        let a = set(&format!("{} {}", words(0..15), words(100..105)));
        let b = set(&format!("{} {}", words(0..15), words(200..205)));
        // 3 shared windows out of 8 per side
        assert_eq!(a.intersection_len(&b), 3);
        assert_eq!(similarity_13gram(&a, &b, SimilarityMode::Containment), 3.0 / 8.0);
        assert_eq!(similarity_13gram(&a, &b, SimilarityMode::Jaccard), 3.0 / 13.0);
    }

    #[test]
    fn similarity_edges() {
        let a = set(&words(0..20));
        let empty = set("too short");
        for mode in [SimilarityMode::Jaccard, SimilarityMode::Containment] {
            assert_eq!(similarity_13gram(&a, &a, mode), 1.0);
            assert_eq!(similarity_13gram(&a, &empty, mode), 0.0);
            assert_eq!(similarity_13gram(&empty, &empty, mode), 0.0);
            assert_eq!(similarity_13gram(&a, &set(&words(50..70)), mode), 0.0);
        }
    }

    #[test]
    fn exact_dedup_keeps_first() {
        let (a, b) = (doc("A"), doc("B"));
        let out: Vec<_> = exact_dedup(vec![a.clone(), b.clone(), a.clone()]).collect();
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn verbatim_short_question() {
        let bench = BenchmarkSet::new("b", [("q1", "What is  2+2?"), ("q2", "Compute 7!")]).unwrap();
        let dec = Decontaminator::new(bench, DecontamConfig::default()).unwrap();
        let r = dec.check(&doc("Exercise.\nWhat is 2+2?\nAnswer: 4")).unwrap();
        assert_eq!((r.question_id.as_str(), r.reason), ("q1", RemovalReason::Exact));
        assert!(dec.check(&doc("what is 2+2")).is_none());
    }

    #[test]
    fn strict_threshold() {
        // containment exactly 0.5 at threshold 0.5 stays
        let q = words(0..14);
        let bench = BenchmarkSet::new("b", [("q", q.as_str())]).unwrap();
        let cfg = DecontamConfig {
            threshold: 0.5,
            ..Default::default()
        };
        let dec = Decontaminator::new(bench, cfg).unwrap();
        assert!(dec.check(&doc(&format!("{} x", words(0..13)))).is_none());
        let r = dec.check(&doc(&words(0..14).replace(' ', ", "))).unwrap();
        assert_eq!((r.score, r.reason), (1.0, RemovalReason::Ngram));
    }

    #[test]
    fn bad_inputs() {
        assert!(BenchmarkSet::new("b", [("q", "  ")]).is_err());
        let bench = BenchmarkSet::new("b", [("q", "x")]).unwrap();
        let cfg = DecontamConfig {
            threshold: 0.0,
            ..Default::default()
        };
        assert!(Decontaminator::new(bench, cfg).is_err());
    }
}
