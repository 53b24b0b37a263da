//! Pipeline configuration file.
//!
//! ```toml
//! seed = 0
//! output_dir = "out"
//!
//! [gateway]
//! fixtures = "fixtures/replies"
//!
//! [[stage]]
//! kind = "train-classifier"
//! name = "seed_model"
//! positive = ["data/math.jsonl"]
//! negative = ["data/general.jsonl"]
//!
//! [[stage]]
//! kind = "filter-web"
//! name = "web"
//! inputs = ["data/web.jsonl"]
//! stage1_model = "@seed_model"
//! ```
//!
//! An input written `@name` is the output of the earlier stage `name`; any
//! other input is a path, relative to the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::Context;
use mathcode_core::classifier::ClassifierConfig;
use mathcode_core::corpus::TokenScheme;
use mathcode_core::dedup::SimilarityMode;
use mathcode_core::filters::{AnnotateOptions, WebFilterPlan};
use mathcode_core::gateway::{RequestDefaults, RetryPolicy};
use mathcode_core::verification::{ComposeMode, Limits, MatchPolicy, UnverifiablePolicy};
use mathcode_core::Source;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub tokens: TokenConfig,
    /// Runner command for verification; the built-in stub runner by default.
    #[serde(default)]
    pub runner: Option<Vec<String>>,
    #[serde(rename = "stage")]
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    /// Directory of recorded replies; no network access when set.
    pub fixtures: Option<PathBuf>,
    /// Response cache; `<output_dir>/llm-cache` when unset.
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub request: RequestDefaults,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub requests_per_second: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenConfig {
    pub scheme: TokenScheme,
    /// Rank file for the `bpe` scheme.
    pub vocab: Option<PathBuf>,
}

impl Default for TokenConfig {
    fn default() -> Self {
        TokenConfig {
            scheme: TokenScheme::Whitespace,
            vocab: None,
        }
    }
}

/// Classifier hyperparameters; the seed comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierParams {
    pub dim: usize,
    pub lr: f64,
    pub word_ngrams: usize,
    pub epochs: u32,
    pub buckets: u64,
    pub min_count: u32,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        ClassifierParams {
            dim: c.dim,
            lr: c.lr,
            word_ngrams: c.word_ngrams,
            epochs: c.epochs,
            buckets: c.buckets,
            min_count: c.min_count,
        }
    }
}

impl ClassifierParams {
    pub fn with_seed(&self, seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            dim: self.dim,
            lr: self.lr,
            word_ngrams: self.word_ngrams,
            epochs: self.epochs,
            buckets: self.buckets,
            min_count: self.min_count,
            seed,
        }
    }
}

fn web() -> Source {
    Source::Web
}
fn code() -> Source {
    Source::Code
}
fn textbook() -> Source {
    Source::Textbook
}
fn half() -> f64 {
    0.5
}
fn budget() -> usize {
    16_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainStage {
    pub name: String,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    #[serde(default = "web")]
    pub source: Source,
    #[serde(default)]
    pub classifier: ClassifierParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreStage {
    pub name: String,
    pub inputs: Vec<String>,
    pub model: String,
    /// Documents scoring below are dropped; all are kept when unset.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "web")]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterWebStage {
    pub name: String,
    pub inputs: Vec<String>,
    pub stage1_model: String,
    /// Skip annotation and use this second-stage model.
    #[serde(default)]
    pub stage2_model: Option<String>,
    #[serde(default = "half")]
    pub stage1_threshold: f64,
    #[serde(default = "half")]
    pub stage2_threshold: f64,
    #[serde(default = "positive_types")]
    pub positive_types: BTreeSet<u8>,
    #[serde(default = "annotation_sample")]
    pub annotation_sample: usize,
    #[serde(default = "budget")]
    pub char_budget: usize,
    #[serde(default)]
    pub classifier: ClassifierParams,
    #[serde(default = "web")]
    pub source: Source,
}

fn positive_types() -> BTreeSet<u8> {
    WebFilterPlan::default().positive_types
}
fn annotation_sample() -> usize {
    WebFilterPlan::default().annotation_sample
}

impl FilterWebStage {
    pub fn plan(&self, seed: u64, workers: usize) -> WebFilterPlan {
        WebFilterPlan {
            stage1_threshold: self.stage1_threshold,
            positive_types: self.positive_types.clone(),
            stage2_threshold: self.stage2_threshold,
            annotation_sample: self.annotation_sample,
            seed,
            stage2: self.classifier.with_seed(seed),
            annotate: AnnotateOptions {
                char_budget: self.char_budget,
                workers,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateStage {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(default = "budget")]
    pub char_budget: usize,
    #[serde(default = "web")]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterCodeStage {
    pub name: String,
    pub inputs: Vec<String>,
    /// Package names; the standard math set when unset.
    #[serde(default)]
    pub packages: Option<Vec<String>>,
    #[serde(default = "code")]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterTextbooksStage {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub keywords: Option<Vec<String>>,
    #[serde(default = "textbook")]
    pub source: Source,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMode {
    /// Reasoning steps with code snippets.
    #[default]
    Computations,
    /// Plain rewrite of the text, without code.
    Rewrite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractStage {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub mode: ExtractMode,
    #[serde(default = "budget")]
    pub char_budget: usize,
    #[serde(default = "web")]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyStage {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub tolerance: MatchPolicy,
    #[serde(default)]
    pub unverifiable: UnverifiablePolicy,
    #[serde(default = "requeues")]
    pub max_requeues: u32,
}

fn requeues() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeStage {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(default = "step_and_code")]
    pub mode: ComposeMode,
}

fn step_and_code() -> ComposeMode {
    ComposeMode::StepAndCode
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupStage {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(default = "web")]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecontaminateStage {
    pub name: String,
    pub inputs: Vec<String>,
    /// Question files, one record per line with `id` and `text`.
    pub benchmarks: Vec<String>,
    #[serde(default = "threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub mode: SimilarityMode,
    #[serde(default = "web")]
    pub source: Source,
}

fn threshold() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsStage {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(default = "web")]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Stage {
    TrainClassifier(TrainStage),
    Score(ScoreStage),
    FilterWeb(FilterWebStage),
    Annotate(AnnotateStage),
    FilterCode(FilterCodeStage),
    FilterTextbooks(FilterTextbooksStage),
    Extract(ExtractStage),
    Verify(VerifyStage),
    Compose(ComposeStage),
    Dedup(DedupStage),
    Decontaminate(DecontaminateStage),
    Stats(StatsStage),
}

/// What a stage's primary output holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Documents,
    Computations,
    Labels,
    Model,
    Report,
}

impl Kind {
    pub fn extension(self) -> &'static str {
        match self {
            Kind::Model => "mcft",
            Kind::Report => "txt",
            _ => "jsonl",
        }
    }
}

impl Stage {
    pub fn name(&self) -> &str {
        match self {
            Stage::TrainClassifier(s) => &s.name,
            Stage::Score(s) => &s.name,
            Stage::FilterWeb(s) => &s.name,
            Stage::Annotate(s) => &s.name,
            Stage::FilterCode(s) => &s.name,
            Stage::FilterTextbooks(s) => &s.name,
            Stage::Extract(s) => &s.name,
            Stage::Verify(s) => &s.name,
            Stage::Compose(s) => &s.name,
            Stage::Dedup(s) => &s.name,
            Stage::Decontaminate(s) => &s.name,
            Stage::Stats(s) => &s.name,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Stage::TrainClassifier(_) => "train-classifier",
            Stage::Score(_) => "score",
            Stage::FilterWeb(_) => "filter-web",
            Stage::Annotate(_) => "annotate",
            Stage::FilterCode(_) => "filter-code",
            Stage::FilterTextbooks(_) => "filter-textbooks",
            Stage::Extract(_) => "extract",
            Stage::Verify(_) => "verify",
            Stage::Compose(_) => "compose",
            Stage::Dedup(_) => "dedup",
            Stage::Decontaminate(_) => "decontaminate",
            Stage::Stats(_) => "stats",
        }
    }

    pub fn output_kind(&self) -> Kind {
        match self {
            Stage::TrainClassifier(_) => Kind::Model,
            Stage::Annotate(_) => Kind::Labels,
            Stage::Extract(s) if s.mode == ExtractMode::Computations => Kind::Computations,
            Stage::Verify(_) => Kind::Computations,
            Stage::Stats(_) => Kind::Report,
            _ => Kind::Documents,
        }
    }

    /// Every input slot with the kind it must hold.
    pub fn inputs(&self) -> Vec<(&str, Kind)> {
        fn docs(v: &[String]) -> Vec<(&str, Kind)> {
            v.iter().map(|s| (s.as_str(), Kind::Documents)).collect()
        }
        match self {
            Stage::TrainClassifier(s) => {
                let mut out = docs(&s.positive);
                out.extend(docs(&s.negative));
                out
            }
            Stage::Score(s) => {
                let mut out = docs(&s.inputs);
                out.push((s.model.as_str(), Kind::Model));
                out
            }
            Stage::FilterWeb(s) => {
                let mut out = docs(&s.inputs);
                out.push((s.stage1_model.as_str(), Kind::Model));
                if let Some(m) = &s.stage2_model {
                    out.push((m.as_str(), Kind::Model));
                }
                out
            }
            Stage::Annotate(s) => docs(&s.inputs),
            Stage::FilterCode(s) => docs(&s.inputs),
            Stage::FilterTextbooks(s) => docs(&s.inputs),
            Stage::Extract(s) => docs(&s.inputs),
            Stage::Verify(s) => s.inputs.iter().map(|i| (i.as_str(), Kind::Computations)).collect(),
            Stage::Compose(s) => s.inputs.iter().map(|i| (i.as_str(), Kind::Computations)).collect(),
            Stage::Dedup(s) => docs(&s.inputs),
            Stage::Decontaminate(s) => {
                let mut out = docs(&s.inputs);
                out.extend(s.benchmarks.iter().map(|b| (b.as_str(), Kind::Labels)));
                out
            }
            Stage::Stats(s) => docs(&s.inputs),
        }
    }

    /// Parameter checks that need no input data.
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, t: f64| {
            if (0.0..=1.0).contains(&t) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0, 1], got {t}"))
            }
        };
        let primary: Vec<&String> = match self {
            Stage::TrainClassifier(s) => s.positive.iter().chain(&s.negative).collect(),
            Stage::Score(s) => s.inputs.iter().collect(),
            Stage::FilterWeb(s) => s.inputs.iter().collect(),
            Stage::Annotate(s) => s.inputs.iter().collect(),
            Stage::FilterCode(s) => s.inputs.iter().collect(),
            Stage::FilterTextbooks(s) => s.inputs.iter().collect(),
            Stage::Extract(s) => s.inputs.iter().collect(),
            Stage::Verify(s) => s.inputs.iter().collect(),
            Stage::Compose(s) => s.inputs.iter().collect(),
            Stage::Dedup(s) => s.inputs.iter().collect(),
            Stage::Decontaminate(s) => s.inputs.iter().collect(),
            Stage::Stats(s) => s.inputs.iter().collect(),
        };
        if primary.is_empty() {
            return Err("no inputs".into());
        }
        match self {
            Stage::TrainClassifier(s) => {
                if s.positive.is_empty() || s.negative.is_empty() {
                    return Err("needs both positive and negative inputs".into());
                }
                s.classifier.with_seed(0).validate().map_err(|e| e.to_string())
            }
            Stage::Score(s) => s.threshold.map_or(Ok(()), |t| unit("threshold", t)),
            Stage::FilterWeb(s) => s.plan(0, 1).validate().map_err(|e| e.to_string()),
            Stage::Extract(ExtractStage { char_budget: 0, .. })
            | Stage::Annotate(AnnotateStage { char_budget: 0, .. }) => Err("char_budget must be positive".into()),
            Stage::Verify(s) => {
                let l = &s.limits;
                if !(l.time_limit_s.is_finite() && l.time_limit_s > 0.0) || l.memory_limit_mb == 0 || l.stdout_cap == 0
                {
                    return Err("limits must be positive".into());
                }
                if !(s.tolerance.rel_tol >= 0.0 && s.tolerance.abs_tol >= 0.0) {
                    return Err("tolerances must be non-negative".into());
                }
                Ok(())
            }
            Stage::Decontaminate(s) => {
                if !(s.threshold > 0.0 && s.threshold <= 1.0) {
                    return Err(format!("threshold must lie in (0, 1], got {}", s.threshold));
                }
                if s.benchmarks.is_empty() {
                    return Err("no benchmark files".into());
                }
                Ok(())
            }
            Stage::FilterCode(s) if s.packages.as_ref().is_some_and(Vec::is_empty) => Err("empty package list".into()),
            Stage::FilterTextbooks(s) if s.keywords.as_ref().is_some_and(Vec::is_empty) => {
                Err("empty keyword list".into())
            }
            _ => Ok(()),
        }
    }
}

pub enum Input {
    Stage(String),
    Path(PathBuf),
}

pub fn parse_input(raw: &str, base: &Path) -> Input {
    match raw.strip_prefix('@') {
        Some(name) => Input::Stage(name.to_string()),
        None => Input::Path(base.join(raw)),
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config
            .validate(base)
            .context(format!("invalid pipeline {}", path.display()))?;
        Ok(config)
    }

    /// Names, input references and parameters. Raw inputs must exist.
    pub fn validate(&self, base: &Path) -> Result<(), ConfigError> {
        if self.stages.is_empty() {
            return Err(ConfigError("the pipeline has no stages".into()));
        }
        if self.workers == Some(0) {
            return Err(ConfigError("workers must be at least 1".into()));
        }
        if self.tokens.scheme == TokenScheme::Bpe && self.tokens.vocab.is_none() {
            return Err(ConfigError("tokens.scheme = \"bpe\" needs tokens.vocab".into()));
        }
        let mut kinds: BTreeMap<&str, Kind> = BTreeMap::new();
        for stage in &self.stages {
            let name = stage.name();
            let err = |msg: String| ConfigError(format!("stage {name:?}: {msg}"));
            if !valid_name(name) {
                return Err(err("names may use only letters, digits, '_' and '-'".into()));
            }
            if kinds.contains_key(name) {
                return Err(err("duplicate stage name".into()));
            }
            stage.validate().map_err(err)?;
            for (raw, want) in stage.inputs() {
                match parse_input(raw, base) {
                    Input::Stage(dep) => match kinds.get(dep.as_str()) {
                        None => return Err(err(format!("input @{dep} does not name an earlier stage"))),
                        Some(&got) if got != want => {
                            return Err(err(format!("input @{dep} holds {got:?}, expected {want:?}")))
                        }
                        Some(_) => {}
                    },
                    Input::Path(p) if !p.exists() => return Err(err(format!("input {} does not exist", p.display()))),
                    Input::Path(_) => {}
                }
            }
            kinds.insert(name, stage.output_kind());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<PipelineConfig, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    #[test]
    fn stage_tables() {
        let c = parse(
            r#"
            seed = 3
            [[stage]]
            kind = "dedup"
            name = "d"
            inputs = ["a.jsonl"]
            [[stage]]
            kind = "compose"
            name = "c"
            inputs = ["@x"]
            mode = "step_only"
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.stages[0].kind_name(), "dedup");
        assert!(matches!(&c.stages[1], Stage::Compose(s) if s.mode == ComposeMode::StepOnly));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse("sed = 1\n[[stage]]\nkind = \"dedup\"\nname = \"d\"\ninputs = []").is_err());
        let typo = "[[stage]]\nkind = \"dedup\"\nname = \"d\"\ninput = [\"a\"]";
        assert!(parse(typo).is_err());
        assert!(parse("[[stage]]\nkind = \"nope\"\nname = \"d\"").is_err());
    }

    #[test]
    fn references_checked() {
        let dir = std::env::temp_dir();
        let c = parse(
            r#"
            [[stage]]
            kind = "compose"
            name = "c"
            inputs = ["@later"]
            "#,
        )
        .unwrap();
        assert!(c.validate(&dir).is_err());

        let c = parse(
            r#"
            [[stage]]
            kind = "stats"
            name = "s"
            inputs = ["/definitely/missing.jsonl"]
            "#,
        )
        .unwrap();
        assert!(c.validate(&dir).unwrap_err().0.contains("does not exist"));
    }
}
