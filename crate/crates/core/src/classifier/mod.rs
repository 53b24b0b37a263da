//! FastText-style supervised linear classifier over hashed word n-grams.
//!
//! A document is represented by the average of its input-matrix rows: one
//! row per in-vocabulary word plus one hashed bucket row per word n-gram of
//! order 2..=`word_ngrams`. A 2×dim output layer with softmax gives the
//! class probabilities. Training is plain SGD with the learning rate decaying
//! linearly to zero over all updates.
//!
//! Bucket rows are materialized lazily. Every row has a deterministic initial
//! value derived from the seed and the row index, so a row that training
//! never touched is reproduced on demand instead of being stored.

mod format;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{word_tokens, Document, Filtered};

pub use format::{load_model, save_model, FORMAT_VERSION, MAGIC};

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("invalid classifier configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, example {example}: loss {loss}")]
    NonFiniteLoss { epoch: u32, example: usize, loss: f32 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file {path}: {reason}")]
    Format { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub dim: usize,
    pub lr: f64,
    pub word_ngrams: usize,
    pub epochs: u32,
    pub buckets: u64,
    pub min_count: u32,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            dim: 50,
            lr: 0.5,
            word_ngrams: 2,
            epochs: 5,
            buckets: 2_000_000,
            min_count: 1,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |msg: &str| Err(ClassifierError::Config(msg.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive and finite");
        }
        if self.word_ngrams == 0 {
            return bad("word_ngrams must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.buckets == 0 {
            return bad("buckets must be at least 1");
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// FNV-1a over the tokens joined with single spaces, without allocating.
pub(crate) fn hash_joined<S: AsRef<str>>(tokens: &[S]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            hash ^= u64::from(b' ');
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        for &b in tok.as_ref().as_bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

const NEGATIVE: usize = 0;
const POSITIVE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    config: ClassifierConfig,
    vocab: HashMap<String, u32>,
    /// Rows for vocabulary words, `vocab.len() * dim`, row-major.
    word_rows: Vec<f32>,
    /// Materialized bucket rows keyed by bucket index (not offset by vocab size).
    bucket_rows: HashMap<u64, Vec<f32>>,
    /// `[negative, positive]` rows, each `dim` wide.
    output: Vec<f32>,
}

/// Deterministic initial value of input row `row`: uniform in `[-1/dim, 1/dim]`.
fn initial_row(seed: u64, row: u64, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    let bound = 1.0 / dim as f32;
    (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect()
}

impl ClassifierModel {
    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    /// Total number of addressable input rows, `|vocab| + buckets`.
    pub fn input_rows(&self) -> u64 {
        self.vocab.len() as u64 + self.config.buckets
    }

    /// Input-row indices for a text: vocabulary words first, then hashed
    /// n-grams of order 2..=word_ngrams. Every index is `< input_rows()`.
    pub fn features(&self, text: &str) -> Vec<u64> {
        let tokens = word_tokens(text);
        self.features_of_tokens(&tokens)
    }

    fn features_of_tokens(&self, tokens: &[String]) -> Vec<u64> {
        let nvocab = self.vocab.len() as u64;
        let mut out: Vec<u64> = tokens
            .iter()
            .filter_map(|t| self.vocab.get(t).map(|&i| u64::from(i)))
            .collect();
        for n in 2..=self.config.word_ngrams {
            for window in tokens.windows(n) {
                out.push(nvocab + hash_joined(window) % self.config.buckets);
            }
        }
        out
    }

    fn row(&self, index: u64) -> std::borrow::Cow<'_, [f32]> {
        let dim = self.config.dim;
        let nvocab = self.vocab.len() as u64;
        if index < nvocab {
            let start = index as usize * dim;
            std::borrow::Cow::Borrowed(&self.word_rows[start..start + dim])
        } else {
            let bucket = index - nvocab;
            match self.bucket_rows.get(&bucket) {
                Some(row) => std::borrow::Cow::Borrowed(row),
                None => std::borrow::Cow::Owned(initial_row(self.config.seed, index, dim)),
            }
        }
    }

    fn row_mut(&mut self, index: u64) -> &mut [f32] {
        let dim = self.config.dim;
        let nvocab = self.vocab.len() as u64;
        if index < nvocab {
            let start = index as usize * dim;
            &mut self.word_rows[start..start + dim]
        } else {
            let seed = self.config.seed;
            self.bucket_rows
                .entry(index - nvocab)
                .or_insert_with(|| initial_row(seed, index, dim))
        }
    }

    /// `[p(negative), p(positive)]`; uniform when the text has no features.
    pub fn probabilities(&self, text: &str) -> [f64; 2] {
        let features = self.features(text);
        if features.is_empty() {
            return [0.5, 0.5];
        }
        let dim = self.config.dim;
        let mut hidden = vec![0f64; dim];
        for &f in &features {
            for (h, &w) in hidden.iter_mut().zip(self.row(f).iter()) {
                *h += f64::from(w);
            }
        }
        let inv = 1.0 / features.len() as f64;
        hidden.iter_mut().for_each(|h| *h *= inv);
        let logit = |class: usize| -> f64 {
            self.output[class * dim..(class + 1) * dim]
                .iter()
                .zip(&hidden)
                .map(|(&w, &h)| f64::from(w) * h)
                .sum()
        };
        let (neg, pos) = (logit(NEGATIVE), logit(POSITIVE));
        let p_pos = 1.0 / (1.0 + (neg - pos).exp());
        [1.0 - p_pos, p_pos]
    }

    /// Probability of the positive class.
    pub fn score(&self, text: &str) -> f64 {
        self.probabilities(text)[POSITIVE]
    }
}

pub fn score(model: &ClassifierModel, text: &str) -> f64 {
    model.score(text)
}

/// Retain documents scoring at least `threshold`, preserving order.
pub fn filter_by_score<I>(
    docs: I,
    model: &ClassifierModel,
    threshold: f64,
) -> Filtered<I::IntoIter, impl FnMut(&Document) -> bool + '_>
where
    I: IntoIterator<Item = Document>,
{
    assert!((0.0..=1.0).contains(&threshold), "threshold must lie in [0, 1]");
    Filtered::new(docs.into_iter(), move |doc| model.score(&doc.text) >= threshold)
}

/// Train a two-class model. Positives and negatives are collected into
/// memory; the example order is reshuffled each epoch from the seed, so the
/// result is a deterministic function of (data, order, config).
pub fn train<P, N>(positive: P, negative: N, config: &ClassifierConfig) -> Result<ClassifierModel, ClassifierError>
where
    P: IntoIterator<Item = Document>,
    N: IntoIterator<Item = Document>,
{
    config.validate()?;
    let mut examples: Vec<(Vec<String>, usize)> = Vec::new();
    let mut npos = 0usize;
    for doc in positive {
        examples.push((word_tokens(&doc.text), POSITIVE));
        npos += 1;
    }
    for doc in negative {
        examples.push((word_tokens(&doc.text), NEGATIVE));
    }
    let nneg = examples.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(ClassifierError::Config(format!(
            "training needs positive and negative examples (got {npos} positive, {nneg} negative)"
        )));
    }

    let mut counts: HashMap<&str, u32> = HashMap::new();
    for (tokens, _) in &examples {
        for t in tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut words: Vec<&str> = counts
        .iter()
        .filter(|(_, &c)| c >= config.min_count)
        .map(|(&w, _)| w)
        .collect();
    words.sort_unstable();
    let vocab: HashMap<String, u32> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), i as u32))
        .collect();

    let dim = config.dim;
    let mut word_rows = Vec::with_capacity(vocab.len() * dim);
    for i in 0..vocab.len() as u64 {
        word_rows.extend(initial_row(config.seed, i, dim));
    }
    let mut model = ClassifierModel {
        config: config.clone(),
        vocab,
        word_rows,
        bucket_rows: HashMap::new(),
        output: vec![0.0; 2 * dim],
    };

    let features: Vec<(Vec<u64>, usize)> = examples
        .iter()
        .map(|(tokens, label)| (model.features_of_tokens(tokens), *label))
        .collect();
    drop(examples);

    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total = (u64::from(config.epochs) * features.len() as u64) as f64;
    let mut step = 0u64;
    let mut hidden = vec![0f32; dim];
    let mut grad = vec![0f32; dim];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (pos, &idx) in order.iter().enumerate() {
            let lr = (config.lr * (1.0 - step as f64 / total)) as f32;
            step += 1;
            let (feats, label) = &features[idx];
            if feats.is_empty() {
                continue;
            }
            hidden.iter_mut().for_each(|h| *h = 0.0);
            for &f in feats {
                for (h, w) in hidden.iter_mut().zip(model.row(f).iter()) {
                    *h += *w;
                }
            }
            let inv = 1.0 / feats.len() as f32;
            hidden.iter_mut().for_each(|h| *h *= inv);

            let logits: [f32; 2] = [0, 1].map(|c| {
                model.output[c * dim..(c + 1) * dim]
                    .iter()
                    .zip(&hidden)
                    .map(|(w, h)| w * h)
                    .sum()
            });
            let max = logits[0].max(logits[1]);
            let exps = logits.map(|l| (l - max).exp());
            let z = exps[0] + exps[1];
            let probs = exps.map(|e| e / z);
            let loss = -(probs[*label].max(1e-30)).ln();
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss {
                    epoch,
                    example: pos,
                    loss,
                });
            }

            grad.iter_mut().for_each(|g| *g = 0.0);
            for (class, p) in probs.iter().enumerate() {
                let target = if class == *label { 1.0 } else { 0.0 };
                let alpha = lr * (target - p);
                let out = &mut model.output[class * dim..(class + 1) * dim];
                for ((g, w), h) in grad.iter_mut().zip(out.iter_mut()).zip(&hidden) {
                    *g += alpha * *w;
                    *w += alpha * h;
                }
            }
            grad.iter_mut().for_each(|g| *g *= inv);
            for &f in feats {
                for (w, g) in model.row_mut(f).iter_mut().zip(&grad) {
                    *w += g;
                }
            }
        }
    }
    Ok(model)
}
