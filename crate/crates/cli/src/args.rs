use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mathcode_core::dedup::SimilarityMode;
use mathcode_core::verification::{ComposeMode, Limits, MatchPolicy, UnverifiablePolicy};
use mathcode_core::Source;

use crate::config::*;

#[derive(Parser)]
#[command(
    name = "mathcode",
    version,
    about = "Curate math pretraining corpora with execution-verified code"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct GlobalArgs {
    /// Seed for sampling and training [default: 0, or the config's seed]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: available cores]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Replay recorded model replies from this directory instead of calling an endpoint
    #[arg(long, global = true)]
    pub fixtures: Option<PathBuf>,
    /// Cache model replies here
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Model id sent with every request
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Sandbox runner command, e.g. "python3 -m sandbox_runner" [default: built-in stub]
    #[arg(long, global = true)]
    pub runner: Option<String>,
    /// Token counting scheme
    #[arg(long, global = true, value_enum)]
    pub tokens: Option<Scheme>,
    /// BPE rank file (with --tokens bpe)
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    /// More log output (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Scheme {
    Whitespace,
    Bpe,
}

#[derive(Args)]
pub struct Io {
    /// Input file (repeatable)
    #[arg(short, long = "input", required = true)]
    pub inputs: Vec<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct ClassifierArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub word_ngrams: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub buckets: Option<u64>,
    #[arg(long)]
    pub min_count: Option<u32>,
}

impl ClassifierArgs {
    fn params(&self) -> ClassifierParams {
        let d = ClassifierParams::default();
        ClassifierParams {
            dim: self.dim.unwrap_or(d.dim),
            lr: self.lr.unwrap_or(d.lr),
            word_ngrams: self.word_ngrams.unwrap_or(d.word_ngrams),
            epochs: self.epochs.unwrap_or(d.epochs),
            buckets: self.buckets.unwrap_or(d.buckets),
            min_count: self.min_count.unwrap_or(d.min_count),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Unverifiable {
    Drop,
    RetainWithFlag,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a relevance classifier from positive and negative corpora
    TrainClassifier {
        #[arg(long, required = true)]
        positive: Vec<String>,
        #[arg(long, required = true)]
        negative: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "web")]
        source: Source,
        #[command(flatten)]
        classifier: ClassifierArgs,
    },
    /// Attach classifier scores, optionally dropping low scorers
    Score {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        model: String,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "web")]
        source: Source,
    },
    /// Two-stage web filtering: seed classifier, annotation, refined classifier
    FilterWeb {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        stage1_model: String,
        /// Use this model for the second stage instead of annotating
        #[arg(long)]
        stage2_model: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        stage1_threshold: f64,
        #[arg(long, default_value_t = 0.5)]
        stage2_threshold: f64,
        /// Type codes counted as relevant
        #[arg(long, value_delimiter = ',')]
        positive_types: Option<Vec<u8>>,
        #[arg(long)]
        annotation_sample: Option<usize>,
        #[arg(long, default_value_t = 16_000)]
        char_budget: usize,
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long, default_value = "web")]
        source: Source,
    },
    /// Label documents with their type code
    Annotate {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 16_000)]
        char_budget: usize,
        #[arg(long, default_value = "web")]
        source: Source,
    },
    /// Keep code files importing a math package
    FilterCode {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_delimiter = ',')]
        packages: Option<Vec<String>>,
        #[arg(long, default_value = "code")]
        source: Source,
    },
    /// Keep textbooks whose title holds a math keyword
    FilterTextbooks {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_delimiter = ',')]
        keywords: Option<Vec<String>>,
        #[arg(long, default_value = "textbook")]
        source: Source,
    },
    /// Extract reasoning steps with code, or rewrite documents
    Extract {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_enum, default_value = "computations")]
        mode: ExtractMode,
        #[arg(long, default_value_t = 16_000)]
        char_budget: usize,
        #[arg(long, default_value = "web")]
        source: Source,
    },
    /// Run extracted code and keep computations whose output matches
    Verify {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        memory_limit_mb: Option<u64>,
        #[arg(long)]
        stdout_cap: Option<usize>,
        #[arg(long)]
        rel_tol: Option<f64>,
        #[arg(long)]
        abs_tol: Option<f64>,
        #[arg(long, value_enum, default_value = "drop")]
        unverifiable: Unverifiable,
        #[arg(long, default_value_t = 2)]
        max_requeues: u32,
    },
    /// Turn verified computations into training documents
    Compose {
        #[command(flatten)]
        io: Io,
        /// step_and_code, step_only or code_only
        #[arg(long, default_value = "step_and_code")]
        mode: ComposeMode,
    },
    /// Drop documents whose text repeats an earlier one
    Dedup {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value = "web")]
        source: Source,
    },
    /// Remove documents overlapping benchmark questions
    Decontaminate {
        #[command(flatten)]
        io: Io,
        /// Question file, one JSON record per line (repeatable)
        #[arg(long = "benchmark", required = true)]
        benchmarks: Vec<String>,
        #[arg(long, default_value_t = 0.6)]
        threshold: f64,
        /// containment or jaccard
        #[arg(long, default_value = "containment")]
        mode: SimilarityMode,
        #[arg(long, default_value = "web")]
        source: Source,
    },
    /// Per-component statistics, plus retention when manifests are given
    Stats {
        #[command(flatten)]
        io: Io,
        /// Stage manifest to summarize (repeatable)
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
        #[arg(long, default_value = "web")]
        source: Source,
    },
    /// Run every stage of a pipeline file, skipping stages already done
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides the config's output_dir
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Rerun stages even when their manifests are current
        #[arg(long)]
        force: bool,
    },
    /// Serve sandbox requests on stdin (built-in test runner)
    #[command(hide = true)]
    StubRunner,
}

/// A single-stage subcommand as a stage, with its output path and any
/// manifests to summarize.
pub struct Single {
    pub stage: Stage,
    pub output: PathBuf,
    pub manifests: Vec<PathBuf>,
}

impl Command {
    pub fn into_single(self) -> Option<Single> {
        let name = |s: &str| s.to_string();
        let single = |stage, output| Single {
            stage,
            output,
            manifests: Vec::new(),
        };
        Some(match self {
            Command::TrainClassifier {
                positive,
                negative,
                output,
                source,
                classifier,
            } => single(
                Stage::TrainClassifier(TrainStage {
                    name: name("train-classifier"),
                    positive,
                    negative,
                    source,
                    classifier: classifier.params(),
                }),
                output,
            ),
            Command::Score {
                io,
                model,
                threshold,
                source,
            } => single(
                Stage::Score(ScoreStage {
                    name: name("score"),
                    inputs: io.inputs,
                    model,
                    threshold,
                    source,
                }),
                io.output,
            ),
            Command::FilterWeb {
                io,
                stage1_model,
                stage2_model,
                stage1_threshold,
                stage2_threshold,
                positive_types,
                annotation_sample,
                char_budget,
                classifier,
                source,
            } => {
                let defaults = mathcode_core::filters::WebFilterPlan::default();
                single(
                    Stage::FilterWeb(FilterWebStage {
                        name: name("filter-web"),
                        inputs: io.inputs,
                        stage1_model,
                        stage2_model,
                        stage1_threshold,
                        stage2_threshold,
                        positive_types: positive_types
                            .map(BTreeSet::from_iter)
                            .unwrap_or(defaults.positive_types),
                        annotation_sample: annotation_sample.unwrap_or(defaults.annotation_sample),
                        char_budget,
                        classifier: classifier.params(),
                        source,
                    }),
                    io.output,
                )
            }
            Command::Annotate {
                io,
                char_budget,
                source,
            } => single(
                Stage::Annotate(AnnotateStage {
                    name: name("annotate"),
                    inputs: io.inputs,
                    char_budget,
                    source,
                }),
                io.output,
            ),
            Command::FilterCode { io, packages, source } => single(
                Stage::FilterCode(FilterCodeStage {
                    name: name("filter-code"),
                    inputs: io.inputs,
                    packages,
                    source,
                }),
                io.output,
            ),
            Command::FilterTextbooks { io, keywords, source } => single(
                Stage::FilterTextbooks(FilterTextbooksStage {
                    name: name("filter-textbooks"),
                    inputs: io.inputs,
                    keywords,
                    source,
                }),
                io.output,
            ),
            Command::Extract {
                io,
                mode,
                char_budget,
                source,
            } => single(
                Stage::Extract(ExtractStage {
                    name: name("extract"),
                    inputs: io.inputs,
                    mode,
                    char_budget,
                    source,
                }),
                io.output,
            ),
            Command::Verify {
                io,
                time_limit,
                memory_limit_mb,
                stdout_cap,
                rel_tol,
                abs_tol,
                unverifiable,
                max_requeues,
            } => {
                let (l, t) = (Limits::default(), MatchPolicy::default());
                single(
                    Stage::Verify(VerifyStage {
                        name: name("verify"),
                        inputs: io.inputs,
                        limits: Limits {
                            time_limit_s: time_limit.unwrap_or(l.time_limit_s),
                            memory_limit_mb: memory_limit_mb.unwrap_or(l.memory_limit_mb),
                            stdout_cap: stdout_cap.unwrap_or(l.stdout_cap),
                        },
                        tolerance: MatchPolicy {
                            rel_tol: rel_tol.unwrap_or(t.rel_tol),
                            abs_tol: abs_tol.unwrap_or(t.abs_tol),
                        },
                        unverifiable: match unverifiable {
                            Unverifiable::Drop => UnverifiablePolicy::Drop,
                            Unverifiable::RetainWithFlag => UnverifiablePolicy::RetainWithFlag,
                        },
                        max_requeues,
                    }),
                    io.output,
                )
            }
            Command::Compose { io, mode } => single(
                Stage::Compose(ComposeStage {
                    name: name("compose"),
                    inputs: io.inputs,
                    mode,
                }),
                io.output,
            ),
            Command::Dedup { io, source } => single(
                Stage::Dedup(DedupStage {
                    name: name("dedup"),
                    inputs: io.inputs,
                    source,
                }),
                io.output,
            ),
            Command::Decontaminate {
                io,
                benchmarks,
                threshold,
                mode,
                source,
            } => single(
                Stage::Decontaminate(DecontaminateStage {
                    name: name("decontaminate"),
                    inputs: io.inputs,
                    benchmarks,
                    threshold,
                    mode,
                    source,
                }),
                io.output,
            ),
            Command::Stats { io, manifests, source } => Single {
                stage: Stage::Stats(StatsStage {
                    name: name("stats"),
                    inputs: io.inputs,
                    source,
                }),
                output: io.output,
                manifests,
            },
            Command::Run { .. } | Command::StubRunner => return None,
        })
    }
}
