use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::FilterError;
use crate::corpus::Document;
use crate::extraction::truncate_chars;
use crate::gateway::{render_prompt, FinishReason, Gateway, Template};
use crate::par::OrderedMap;

/// Literal the annotation prompt ends with; the type code follows it.
pub const TYPE_MARKER: &str = "The type is:";

/// "Does not belong to any of the types above."
pub const NOT_MATH_TYPE: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStatus {
    Parsed,
    Unparseable,
    /// The gateway gave up; the document is left out of training.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationLabel {
    pub doc_id: String,
    /// 1..=7 when `status` is `Parsed`.
    pub type_code: Option<u8>,
    pub raw_response: String,
    pub status: LabelStatus,
}

impl AnnotationLabel {
    pub fn from_reply(doc_id: &str, reply: &str) -> Self {
        let type_code = parse_type_code(reply);
        AnnotationLabel {
            doc_id: doc_id.to_string(),
            type_code,
            raw_response: reply.to_string(),
            status: if type_code.is_some() {
                LabelStatus::Parsed
            } else {
                LabelStatus::Unparseable
            },
        }
    }

    fn failed(doc_id: &str, reason: String) -> Self {
        AnnotationLabel {
            doc_id: doc_id.to_string(),
            type_code: None,
            raw_response: reason,
            status: LabelStatus::Failed,
        }
    }
}

static AFTER_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)the type is\s*:?\s*\**\s*(?:type\s*)?(\d+)").unwrap());
static LEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:type\s*)?(\d+)\b").unwrap());

/// Type code from a model reply: the number after the last "The type is:",
/// or, when the model answered with the bare continuation, a leading number.
/// Anything outside 1..=7 is unparseable.
pub fn parse_type_code(reply: &str) -> Option<u8> {
    let digits = AFTER_MARKER
        .captures_iter(reply)
        .last()
        .or_else(|| LEADING.captures(reply))
        .map(|c| c[1].to_string())?;
    digits.parse::<u8>().ok().filter(|t| (1..=7).contains(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotateOptions {
    /// Longest document text, in characters, placed into the prompt.
    pub char_budget: usize,
    pub workers: usize,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions {
            char_budget: 16_000,
            workers: 8,
        }
    }
}

pub fn annotate_document(doc: &Document, gateway: &Gateway, options: &AnnotateOptions) -> AnnotationLabel {
    let (text, _) = truncate_chars(&doc.text, options.char_budget);
    let prompt = match render_prompt(Template::Annotation, text) {
        Ok(p) => p,
        Err(e) => return AnnotationLabel::failed(&doc.id, e.to_string()),
    };
    match gateway.complete(&gateway.prompt(prompt)) {
        Ok(r) if r.finish_reason == FinishReason::Error => {
            AnnotationLabel::failed(&doc.id, "model reported an error finish".into())
        }
        Ok(r) => AnnotationLabel::from_reply(&doc.id, &r.text),
        Err(e) => {
            log::warn!("annotation failed for {}: {e}", doc.id);
            AnnotationLabel::failed(&doc.id, e.to_string())
        }
    }
}

/// Label every document, `options.workers` requests at a time, in input order.
pub fn annotate_documents<'a, I, D>(
    docs: I,
    gateway: &'a Gateway,
    options: &'a AnnotateOptions,
) -> impl Iterator<Item = AnnotationLabel> + 'a
where
    I: IntoIterator<Item = D>,
    I::IntoIter: 'a,
    D: Borrow<Document> + Send + 'a,
{
    let workers = options.workers.max(1);
    OrderedMap::new(docs.into_iter(), workers, workers * 4, move |d: D| {
        annotate_document(d.borrow(), gateway, options)
    })
}

/// Split annotated documents into classifier training streams. Documents
/// with failed, unparseable or missing labels are in neither.
pub fn build_stage2_training_set<I>(
    docs: I,
    labels: &[AnnotationLabel],
    positive_types: &BTreeSet<u8>,
) -> Result<(Vec<Document>, Vec<Document>), FilterError>
where
    I: IntoIterator<Item = Document>,
{
    let by_id: HashMap<&str, u8> = labels
        .iter()
        .filter_map(|l| match (l.status, l.type_code) {
            (LabelStatus::Parsed, Some(t)) => Some((l.doc_id.as_str(), t)),
            _ => None,
        })
        .collect();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for doc in docs {
        match by_id.get(doc.id.as_str()) {
            Some(t) if positive_types.contains(t) => positives.push(doc),
            Some(_) => negatives.push(doc),
            None => {}
        }
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(FilterError::Config(format!(
            "second-stage training needs both classes (got {} positive, {} negative)",
            positives.len(),
            negatives.len()
        )));
    }
    Ok((positives, negatives))
}
