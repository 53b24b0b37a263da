//! Computation extraction: prompt the model with a document, parse the
//! block-structured reply into [`ExtractedComputation`]s.

mod parse;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::gateway::{render_prompt, FinishReason, Gateway, Template};

pub(crate) use parse::render_sections;
pub use parse::{parse_extraction_output, ParsedReply, Reject};

/// One reasoning step plus its code translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedComputation {
    pub source_doc_id: String,
    pub block_index: usize,
    pub conditions: Vec<String>,
    /// LaTeX without the surrounding `$` delimiters.
    pub expression: String,
    pub expected_result: String,
    /// Snippet body without fences.
    pub code: String,
}

impl ExtractedComputation {
    /// Render in the reply layout the extraction prompt asks for.
    pub fn render(&self) -> String {
        render_sections(self, true)
    }

    /// True when the four content fields agree (ids aside).
    pub fn same_fields(&self, other: &ExtractedComputation) -> bool {
        self.conditions == other.conditions
            && self.expression == other.expression
            && self.expected_result == other.expected_result
            && self.code == other.code
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub doc_id: String,
    pub blocks_found: usize,
    pub blocks_valid: usize,
    pub reject_reasons: Vec<Reject>,
    /// Source text was cut to the character budget before prompting.
    #[serde(default)]
    pub source_truncated: bool,
    /// Reply hit the model's output limit.
    #[serde(default)]
    pub reply_truncated: bool,
    /// Set when the gateway call itself failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractOptions {
    /// Longest source text, in characters, placed into the prompt.
    pub char_budget: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { char_budget: 16_000 }
    }
}

/// Cut `text` to at most `budget` characters on a char boundary.
pub fn truncate_chars(text: &str, budget: usize) -> (&str, bool) {
    match text.char_indices().nth(budget) {
        Some((cut, _)) => (&text[..cut], true),
        None => (text, false),
    }
}

/// Prompt the model for `doc` and parse its reply. Gateway failures and
/// parse problems end up in the report; this never returns an error.
pub fn extract_computations(
    doc: &Document,
    gateway: &Gateway,
    options: &ExtractOptions,
) -> (Vec<ExtractedComputation>, ExtractionReport) {
    let (text, source_truncated) = truncate_chars(&doc.text, options.char_budget);
    let mut report = ExtractionReport {
        doc_id: doc.id.clone(),
        blocks_found: 0,
        blocks_valid: 0,
        reject_reasons: Vec::new(),
        source_truncated,
        reply_truncated: false,
        failure: None,
    };
    let reply = render_prompt(Template::Extraction, text)
        .map_err(|e| e.to_string())
        .and_then(|prompt| gateway.complete(&gateway.prompt(prompt)).map_err(|e| e.to_string()));
    let reply = match reply {
        Ok(r) if r.finish_reason == FinishReason::Error => {
            report.failure = Some("model reported an error finish".into());
            return (Vec::new(), report);
        }
        Ok(r) => r,
        Err(e) => {
            log::warn!("extraction failed for {}: {e}", doc.id);
            report.failure = Some(e);
            return (Vec::new(), report);
        }
    };
    report.reply_truncated = reply.is_truncated();
    let parsed = parse::parse_with(&reply.text, &doc.id, reply.is_truncated());
    report.blocks_found = parsed.groups;
    report.blocks_valid = parsed.computations.len();
    report.reject_reasons = parsed.rejects;
    (parsed.computations, report)
}

/// The no-code ablation: ask the model to rewrite `doc` and return the
/// rewrite as a new document of the same source. `None` when the call
/// fails or the reply is empty.
pub fn rewrite_document(doc: &Document, gateway: &Gateway, options: &ExtractOptions) -> Option<Document> {
    let (text, source_truncated) = truncate_chars(&doc.text, options.char_budget);
    let prompt = render_prompt(Template::Rewrite, text).ok()?;
    let reply = match gateway.complete(&gateway.prompt(prompt)) {
        Ok(r) if r.finish_reason != FinishReason::Error => r,
        Ok(_) => return None,
        Err(e) => {
            log::warn!("rewrite failed for {}: {e}", doc.id);
            return None;
        }
    };
    let mut out = Document::new(doc.source, reply.text.trim()).ok()?;
    out.meta.insert("rewritten_from".into(), doc.id.clone());
    if source_truncated {
        out.meta.insert("source_truncated".into(), "true".into());
    }
    if reply.is_truncated() {
        out.meta.insert("reply_truncated".into(), "true".into());
    }
    Some(out)
}
