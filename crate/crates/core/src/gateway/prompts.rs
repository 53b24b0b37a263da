use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// Placeholder replaced by the document text.
pub const TEXT_SLOT: &str = "{TEXT}";

const EXTRACTION: &str = include_str!("prompts/extraction.txt");
const ANNOTATION: &str = include_str!("prompts/annotation.txt");
const REWRITE: &str = include_str!("prompts/rewrite.txt");

/// Asset version; bump when any template text changes.
pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Computation extraction and code translation.
    Extraction,
    /// Seven-way document type annotation.
    Annotation,
    /// Plain quality rewrite (the no-code ablation).
    Rewrite,
}

impl Template {
    pub fn text(self) -> &'static str {
        match self {
            Template::Extraction => EXTRACTION,
            Template::Annotation => ANNOTATION,
            Template::Rewrite => REWRITE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Template::Extraction => "extraction",
            Template::Annotation => "annotation",
            Template::Rewrite => "rewrite",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "extraction" => Ok(Template::Extraction),
            "annotation" => Ok(Template::Annotation),
            "rewrite" => Ok(Template::Rewrite),
            other => Err(GatewayError::Config(format!("unknown prompt template {other:?}"))),
        }
    }
}

/// Substitute `text` into the template's single `{TEXT}` slot. The inserted
/// text is never rescanned, so a document containing `{TEXT}` is safe.
pub fn render_prompt(template: Template, text: &str) -> Result<String, GatewayError> {
    if text.trim().is_empty() {
        return Err(GatewayError::Config("prompt text is empty".into()));
    }
    let (head, tail) = template
        .text()
        .split_once(TEXT_SLOT)
        .expect("every template has a {TEXT} slot");
    let mut out = String::with_capacity(head.len() + text.len() + tail.len());
    out.push_str(head);
    out.push_str(text);
    out.push_str(tail);
    Ok(out)
}
