use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, Document, Source};
use crate::extraction::{render_sections, ExtractedComputation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeMode {
    StepAndCode,
    StepOnly,
    CodeOnly,
}

impl ComposeMode {
    pub fn name(self) -> &'static str {
        match self {
            ComposeMode::StepAndCode => "step_and_code",
            ComposeMode::StepOnly => "step_only",
            ComposeMode::CodeOnly => "code_only",
        }
    }
}

impl fmt::Display for ComposeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComposeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "step_and_code" => Ok(ComposeMode::StepAndCode),
            "step_only" => Ok(ComposeMode::StepOnly),
            "code_only" => Ok(ComposeMode::CodeOnly),
            other => Err(format!("unknown compose mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedDocument {
    pub mode: ComposeMode,
    pub text: String,
    pub source_doc_id: String,
    pub block_index: usize,
}

impl ComposedDocument {
    /// Corpus record for the translated-code component.
    pub fn into_document(self) -> Result<Document, CorpusError> {
        Ok(Document::new(Source::TranslatedCode, self.text)?
            .with_meta("source_doc_id", self.source_doc_id)
            .with_meta("block_index", self.block_index.to_string())
            .with_meta("compose_mode", self.mode.name()))
    }
}

/// Render one computation as a training document.
///
/// `step_and_code` is the reasoning step (numbered conditions, then the
/// expression, then the result, each under its label) followed by the
/// fenced snippet. It uses the same layout the extraction reply does, so
/// parsing a composed document gives back the computation. `step_only`
/// stops before the snippet; `code_only` is the fenced snippet alone.
pub fn compose_training_document(c: &ExtractedComputation, mode: ComposeMode) -> ComposedDocument {
    let text = match mode {
        ComposeMode::StepAndCode => render_sections(c, true),
        ComposeMode::StepOnly => render_sections(c, false),
        ComposeMode::CodeOnly => format!("```python\n{}\n```", c.code),
    };
    ComposedDocument {
        mode,
        text,
        source_doc_id: c.source_doc_id.clone(),
        block_index: c.block_index,
    }
}
