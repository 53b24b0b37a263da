//! Source-specific selection: two-stage web filtering, math-package import
//! filtering for code, and title keywords for textbooks.

mod annotate;
mod code;
mod textbook;
mod web;

pub use annotate::{
    annotate_document, annotate_documents, build_stage2_training_set, parse_type_code, AnnotateOptions,
    AnnotationLabel, LabelStatus, NOT_MATH_TYPE, TYPE_MARKER,
};
pub use code::{filter_code_by_imports, ImportFilter, MATH_PACKAGES};
pub use textbook::{filter_textbook_by_title, textbook_title, DEFAULT_KEYWORDS};
pub use web::{
    reservoir_sample, run_web_pipeline, Reservoir, SecondStage, WebFilterPlan, WebPipelineOutput, WebPipelineReport,
    LABELS_FILE, STAGE1_FILE, STAGE2_MODEL_FILE,
};

use crate::classifier::ClassifierError;
use crate::corpus::CorpusError;

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("filter configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("I/O error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
}
