//! Curation toolkit for mathematical pretraining corpora.
//!
//! The crate covers every stage between raw document streams and a finished
//! corpus of paired reasoning steps and verified code:
//!
//! - [`corpus`]: the [`Document`] model, line-delimited corpus I/O and token counting
//! - [`classifier`]: a hashed n-gram linear classifier for relevance filtering
//! - [`filters`]: source-specific selection (two-stage web filtering, import and title filters)
//! - [`gateway`]: chat-completion access with caching, retries and fixture playback
//! - [`extraction`]: prompting for computations and parsing the block-structured reply
//! - [`verification`]: sandboxed execution, result matching, retention and composition
//! - [`dedup`]: exact deduplication and 13-gram benchmark decontamination
//! - [`stats`]: corpus statistics and per-stage retention reports
//! - [`manifest`]: per-stage records of inputs, outputs and counts, used to resume runs
//! - [`par`]: an order-preserving parallel map over streams

pub mod classifier;
pub mod corpus;
pub mod dedup;
pub mod extraction;
pub mod filters;
pub mod gateway;
pub mod manifest;
pub mod par;
pub mod stats;
pub mod verification;

pub use corpus::{Document, Source, TokenCounter};
