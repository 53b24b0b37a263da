use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotate::{annotate_documents, build_stage2_training_set, AnnotateOptions, LabelStatus, NOT_MATH_TYPE};
use super::FilterError;
use crate::classifier::{filter_by_score, save_model, train, ClassifierConfig, ClassifierModel};
use crate::corpus::{read_corpus, CorpusWriter, Document, Retention, Source};
use crate::gateway::Gateway;

pub const STAGE1_FILE: &str = "stage1.jsonl";
pub const LABELS_FILE: &str = "annotations.jsonl";
pub const STAGE2_MODEL_FILE: &str = "stage2.mcft";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WebFilterPlan {
    pub stage1_threshold: f64,
    /// Annotation types treated as math. Type 7 is never allowed.
    pub positive_types: BTreeSet<u8>,
    pub stage2_threshold: f64,
    /// Stage-1 survivors sampled for annotation.
    pub annotation_sample: usize,
    pub seed: u64,
    pub stage2: ClassifierConfig,
    pub annotate: AnnotateOptions,
}

impl Default for WebFilterPlan {
    fn default() -> Self {
        WebFilterPlan {
            stage1_threshold: 0.5,
            positive_types: [1, 2, 3].into(),
            stage2_threshold: 0.5,
            annotation_sample: 10_000,
            seed: 0,
            stage2: ClassifierConfig::default(),
            annotate: AnnotateOptions::default(),
        }
    }
}

impl WebFilterPlan {
    pub fn validate(&self) -> Result<(), FilterError> {
        for (name, t) in [
            ("stage1_threshold", self.stage1_threshold),
            ("stage2_threshold", self.stage2_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(FilterError::Config(format!("{name} must lie in [0, 1], got {t}")));
            }
        }
        if self.positive_types.is_empty() {
            return Err(FilterError::Config("positive_types is empty".into()));
        }
        if let Some(bad) = self.positive_types.iter().find(|t| !(1..NOT_MATH_TYPE).contains(*t)) {
            return Err(FilterError::Config(format!(
                "positive type {bad} is not allowed (choose from 1..=6)"
            )));
        }
        if self.annotation_sample == 0 {
            return Err(FilterError::Config("annotation_sample must be positive".into()));
        }
        self.stage2.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WebPipelineReport {
    pub stage1: Retention,
    pub annotated: usize,
    /// Label outcomes: type codes as strings plus `unparseable` and `failed`.
    pub labels: BTreeMap<String, usize>,
    pub positives: usize,
    pub negatives: usize,
    pub stage2: Retention,
    pub stage2_trained: bool,
}

pub struct WebPipelineOutput {
    pub report: WebPipelineReport,
    /// The model used for the second pass; `None` when nothing survived
    /// the first.
    pub stage2_model: Option<ClassifierModel>,
}

/// Where the second-stage model comes from.
#[derive(Clone, Copy)]
pub enum SecondStage<'a> {
    /// A model trained earlier.
    Given(&'a ClassifierModel),
    /// Annotate a sample of the first-stage survivors through this gateway
    /// and train on the labels.
    Train(&'a Gateway),
}

/// Seeded uniform sample of fixed size over a stream of unknown length.
pub struct Reservoir<T> {
    k: usize,
    seen: usize,
    rng: ChaCha8Rng,
    items: Vec<(usize, T)>,
}

impl<T> Reservoir<T> {
    pub fn new(k: usize, seed: u64) -> Self {
        Reservoir {
            k,
            seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            items: Vec::with_capacity(k.min(1 << 16)),
        }
    }

    pub fn offer(&mut self, item: T) {
        let i = self.seen;
        self.seen += 1;
        if self.items.len() < self.k {
            self.items.push((i, item));
        } else {
            let j = self.rng.gen_range(0..=i);
            if j < self.k {
                self.items[j] = (i, item);
            }
        }
    }

    /// The sample in stream order.
    pub fn into_vec(mut self) -> Vec<T> {
        self.items.sort_by_key(|(i, _)| *i);
        self.items.into_iter().map(|(_, t)| t).collect()
    }
}

pub fn reservoir_sample<T>(items: impl IntoIterator<Item = T>, k: usize, seed: u64) -> Vec<T> {
    let mut r = Reservoir::new(k, seed);
    items.into_iter().for_each(|t| r.offer(t));
    r.into_vec()
}

/// Two-stage web filtering.
///
/// 1. Score `raw` with `stage1`, keeping documents at or above the stage-1
///    threshold (written to `workdir/stage1.jsonl`).
/// 2. With [`SecondStage::Train`]: annotate a seeded sample of the
///    survivors, split it by `positive_types` and train the stage-2
///    classifier (labels and model are written to `workdir`).
/// 3. Score the stage-1 survivors with the stage-2 model and write those at
///    or above the stage-2 threshold to `output`.
///
/// Annotation requests go through the gateway's response cache, so a rerun
/// over the same data repeats no model calls.
pub fn run_web_pipeline<I>(
    raw: I,
    stage1: &ClassifierModel,
    second: SecondStage<'_>,
    plan: &WebFilterPlan,
    workdir: &Path,
    output: &Path,
) -> Result<WebPipelineOutput, FilterError>
where
    I: IntoIterator<Item = Document>,
{
    plan.validate()?;
    std::fs::create_dir_all(workdir).map_err(|e| FilterError::Io(workdir.display().to_string(), e))?;
    let stage1_path = workdir.join(STAGE1_FILE);
    let mut report = WebPipelineReport::default();

    let mut writer = CorpusWriter::create(&stage1_path)?;
    let mut sample = Reservoir::new(plan.annotation_sample, plan.seed);
    let filtered = filter_by_score(raw, stage1, plan.stage1_threshold);
    let stage1_counts = filtered.handle();
    for doc in filtered {
        writer.write(&doc)?;
        sample.offer(doc);
    }
    writer.finish()?;
    report.stage1 = stage1_counts.get();

    if report.stage1.output == 0 {
        CorpusWriter::create(output)?.finish()?;
        return Ok(WebPipelineOutput {
            report,
            stage2_model: None,
        });
    }

    let trained;
    let model = match second {
        SecondStage::Given(m) => m,
        SecondStage::Train(gateway) => {
            let docs = sample.into_vec();
            let labels: Vec<_> = annotate_documents(&docs, gateway, &plan.annotate).collect();
            let mut label_writer = CorpusWriter::create(workdir.join(LABELS_FILE))?;
            for label in &labels {
                label_writer.write_record(label)?;
                let key = match (label.status, label.type_code) {
                    (LabelStatus::Parsed, Some(t)) => t.to_string(),
                    (LabelStatus::Failed, _) => "failed".into(),
                    _ => "unparseable".into(),
                };
                *report.labels.entry(key).or_default() += 1;
            }
            label_writer.finish()?;
            report.annotated = labels.len();
            let (pos, neg) = build_stage2_training_set(docs, &labels, &plan.positive_types)?;
            report.positives = pos.len();
            report.negatives = neg.len();
            trained = train(pos, neg, &plan.stage2)?;
            save_model(&trained, workdir.join(STAGE2_MODEL_FILE))?;
            report.stage2_trained = true;
            &trained
        }
    };

    let mut writer = CorpusWriter::create(output)?;
    for doc in read_corpus(&stage1_path, Source::Web)? {
        let doc = doc?;
        report.stage2.input += 1;
        if model.score(&doc.text) >= plan.stage2_threshold {
            writer.write(&doc)?;
            report.stage2.output += 1;
        }
    }
    writer.finish()?;
    Ok(WebPipelineOutput {
        report,
        stage2_model: Some(model.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_rejects_type_seven() {
        let plan = WebFilterPlan {
            positive_types: [1, 7].into(),
            ..Default::default()
        };
        assert!(matches!(plan.validate(), Err(FilterError::Config(_))));
        assert!(WebFilterPlan::default().validate().is_ok());
    }

    #[test]
    fn reservoir_is_seeded_and_ordered() {
        let a = reservoir_sample(0..1000, 10, 7);
        assert_eq!(a, reservoir_sample(0..1000, 10, 7));
        assert_ne!(a, reservoir_sample(0..1000, 10, 8));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(reservoir_sample(0..3, 10, 0), vec![0, 1, 2]);
    }
}
