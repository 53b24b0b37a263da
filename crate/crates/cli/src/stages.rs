//! One executor per stage kind. Subcommands and the pipeline driver both
//! come through [`execute`].

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use anyhow::Context as _;
use mathcode_core::classifier::{load_model, save_model, train};
use mathcode_core::corpus::{read_corpus, read_records, CorpusWriter};
use mathcode_core::dedup::{decontaminate_stream, exact_dedup, BenchmarkSet, DecontamConfig, Decontaminator};
use mathcode_core::extraction::{extract_computations, rewrite_document, ExtractOptions, ExtractedComputation};
use mathcode_core::filters::{
    annotate_documents, filter_textbook_by_title, run_web_pipeline, textbook_title, AnnotateOptions, ImportFilter,
    LabelStatus, SecondStage, DEFAULT_KEYWORDS,
};
use mathcode_core::manifest::{Artifact, StageManifest};
use mathcode_core::par::OrderedMap;
use mathcode_core::stats::{compute_stats, render_report, retention_report, ReportFormat, RetentionRow};
use mathcode_core::verification::{compose_training_document, verify_stream, SandboxPool, Verifier, VerifyReport};
use mathcode_core::{Document, Source};
use serde::Serialize;
use serde_json::json;

use crate::config::{ExtractMode, Stage};
use crate::context::Context;

/// `dir/web.jsonl` → `dir/web.<suffix>`.
pub fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    output.with_file_name(format!("{stem}.{suffix}"))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    sibling(output, "manifest.json")
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    documents: u64,
    tokens: u64,
}

/// Stream adapter over fallible records: counts what passes through and
/// parks the first error, ending the stream there.
struct Tracked<'a, I> {
    inner: I,
    tally: Rc<Cell<Tally>>,
    error: Rc<RefCell<Option<anyhow::Error>>>,
    ctx: &'a Context,
}

trait Measured {
    fn tokens(&self, ctx: &Context) -> u64;
}

impl Measured for Document {
    fn tokens(&self, ctx: &Context) -> u64 {
        ctx.counter.count(&self.text) as u64
    }
}

impl Measured for ExtractedComputation {
    fn tokens(&self, ctx: &Context) -> u64 {
        ctx.counter.count(&self.render()) as u64
    }
}

impl<T: Measured, I: Iterator<Item = anyhow::Result<T>>> Iterator for Tracked<'_, I> {
    type Item = T;

    fn next(&mut self) -> Option<T> {
        if self.error.borrow().is_some() {
            return None;
        }
        match self.inner.next()? {
            Ok(item) => {
                let mut t = self.tally.get();
                t.documents += 1;
                t.tokens += item.tokens(self.ctx);
                self.tally.set(t);
                Some(item)
            }
            Err(e) => {
                *self.error.borrow_mut() = Some(e);
                None
            }
        }
    }
}

/// Handles for a [`Tracked`] stream after it has been handed off.
struct Probe {
    tally: Rc<Cell<Tally>>,
    error: Rc<RefCell<Option<anyhow::Error>>>,
}

impl Probe {
    fn finish(self) -> anyhow::Result<Tally> {
        match self.error.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(self.tally.get()),
        }
    }
}

fn track<'a, T: Measured, I: Iterator<Item = anyhow::Result<T>>>(
    ctx: &'a Context,
    inner: I,
) -> (Tracked<'a, I>, Probe) {
    let tally = Rc::new(Cell::new(Tally::default()));
    let error = Rc::new(RefCell::new(None));
    let probe = Probe {
        tally: Rc::clone(&tally),
        error: Rc::clone(&error),
    };
    (
        Tracked {
            inner,
            tally,
            error,
            ctx,
        },
        probe,
    )
}

fn doc_source(paths: Vec<PathBuf>, source: Source) -> impl Iterator<Item = anyhow::Result<Document>> {
    paths.into_iter().flat_map(move |p| {
        let opened = read_corpus(&p, source).with_context(|| format!("opening {}", p.display()));
        let (reader, err) = match opened {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(Err(e))),
        };
        err.into_iter()
            .chain(reader.into_iter().flatten().map(|r| r.map_err(anyhow::Error::from)))
    })
}

fn computation_source(paths: Vec<PathBuf>) -> impl Iterator<Item = anyhow::Result<ExtractedComputation>> {
    paths.into_iter().flat_map(|p| {
        let opened =
            read_records::<ExtractedComputation>(p.clone()).with_context(|| format!("opening {}", p.display()));
        let (reader, err) = match opened {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(Err(e))),
        };
        err.into_iter()
            .chain(reader.into_iter().flatten().map(|r| r.map_err(anyhow::Error::from)))
    })
}

/// Writer that tallies documents and tokens.
struct Sink<'a> {
    writer: CorpusWriter,
    tally: Tally,
    ctx: &'a Context,
}

impl<'a> Sink<'a> {
    fn create(path: &Path, ctx: &'a Context) -> anyhow::Result<Self> {
        Ok(Sink {
            writer: CorpusWriter::create(path)?,
            tally: Tally::default(),
            ctx,
        })
    }

    fn put<T: Measured + Serialize>(&mut self, item: &T) -> anyhow::Result<()> {
        self.writer.write_record(item)?;
        self.tally.documents += 1;
        self.tally.tokens += item.tokens(self.ctx);
        Ok(())
    }

    fn finish(self) -> anyhow::Result<Tally> {
        self.writer.finish()?;
        Ok(self.tally)
    }
}

/// Where a stage reads from and writes to.
pub struct StageIo<'a> {
    /// Maps an input as written in the stage (a path or `@stage`) to a file.
    pub resolve: &'a dyn Fn(&str) -> PathBuf,
    pub output: PathBuf,
    /// Manifests to summarize in a stats report, by stage name.
    pub manifests: Vec<(String, PathBuf)>,
}

impl StageIo<'_> {
    fn all(&self, raw: &[String]) -> Vec<PathBuf> {
        raw.iter().map(|r| (self.resolve)(r)).collect()
    }

    /// Every file the stage reads, in order.
    pub fn input_artifacts(&self, stage: &Stage) -> anyhow::Result<Vec<Artifact>> {
        let mut out = Vec::new();
        for (raw, _) in stage.inputs() {
            let path = (self.resolve)(raw);
            out.push(Artifact::of(&path).with_context(|| format!("hashing input {}", path.display()))?);
        }
        for (_, path) in &self.manifests {
            if path.exists() {
                out.push(Artifact::of(path)?);
            }
        }
        Ok(out)
    }
}

struct Outcome {
    input: Tally,
    output: Tally,
    extra_outputs: Vec<PathBuf>,
    details: serde_json::Value,
}

/// Run `stage` and return its manifest (not yet written).
pub fn execute(
    stage: &Stage,
    io: &StageIo,
    ctx: &Context,
    config_hash: String,
    inputs: Vec<Artifact>,
) -> anyhow::Result<StageManifest> {
    if let Some(dir) = io.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let started = Instant::now();
    let outcome = run(stage, io, ctx).with_context(|| format!("stage {:?} ({})", stage.name(), stage.kind_name()))?;
    let mut outputs = vec![Artifact::of(&io.output)?];
    for extra in &outcome.extra_outputs {
        outputs.push(Artifact::of(extra)?);
    }
    Ok(StageManifest {
        stage: stage.name().to_string(),
        config_hash,
        inputs,
        outputs,
        input_documents: outcome.input.documents,
        output_documents: outcome.output.documents,
        input_tokens: outcome.input.tokens,
        output_tokens: outcome.output.tokens,
        wall_time_ms: started.elapsed().as_millis() as u64,
        details: outcome.details,
    })
}

fn run(stage: &Stage, io: &StageIo, ctx: &Context) -> anyhow::Result<Outcome> {
    let out = &io.output;
    match stage {
        Stage::TrainClassifier(s) => {
            let (pos, pos_probe) = track(ctx, doc_source(io.all(&s.positive), s.source));
            let (neg, neg_probe) = track(ctx, doc_source(io.all(&s.negative), s.source));
            let pos: Vec<Document> = pos.collect();
            let neg: Vec<Document> = neg.collect();
            let (p, n) = (pos_probe.finish()?, neg_probe.finish()?);
            let model = train(pos, neg, &s.classifier.with_seed(ctx.seed))?;
            save_model(&model, out)?;
            Ok(Outcome {
                input: Tally {
                    documents: p.documents + n.documents,
                    tokens: p.tokens + n.tokens,
                },
                output: Tally::default(),
                extra_outputs: Vec::new(),
                details: json!({
                    "positives": p.documents,
                    "negatives": n.documents,
                    "vocabulary": model.vocab_len(),
                }),
            })
        }

        Stage::Score(s) => {
            let model = load_model((io.resolve)(&s.model))?;
            let (docs, probe) = track(ctx, doc_source(io.all(&s.inputs), s.source));
            let mut sink = Sink::create(out, ctx)?;
            let scored = OrderedMap::new(docs, ctx.workers, ctx.workers * 64, |d: Document| {
                let score = model.score(&d.text);
                (d, score)
            });
            for (doc, score) in scored {
                if s.threshold.is_none_or(|t| score >= t) {
                    sink.put(&doc.with_meta("score", format!("{score:.6}")))?;
                }
            }
            let input = probe.finish()?;
            Ok(Outcome {
                input,
                output: sink.finish()?,
                extra_outputs: Vec::new(),
                details: serde_json::Value::Null,
            })
        }

        Stage::FilterWeb(s) => {
            let stage1 = load_model((io.resolve)(&s.stage1_model))?;
            let stage2 = s
                .stage2_model
                .as_ref()
                .map(|m| load_model((io.resolve)(m)))
                .transpose()?;
            let plan = s.plan(ctx.seed, ctx.workers);
            let workdir = sibling(out, "work");
            let second = match &stage2 {
                Some(model) => SecondStage::Given(model),
                None => SecondStage::Train(ctx.gateway()?),
            };
            let (docs, probe) = track(ctx, doc_source(io.all(&s.inputs), s.source));
            let result = run_web_pipeline(docs, &stage1, second, &plan, &workdir, out)?;
            let input = probe.finish()?;
            let output = tally_documents(out, s.source, ctx)?;
            let mut extra_outputs = Vec::new();
            if result.report.stage2_trained {
                extra_outputs.push(workdir.join(mathcode_core::filters::LABELS_FILE));
                extra_outputs.push(workdir.join(mathcode_core::filters::STAGE2_MODEL_FILE));
            }
            Ok(Outcome {
                input,
                output,
                extra_outputs,
                details: serde_json::to_value(&result.report)?,
            })
        }

        Stage::Annotate(s) => {
            let gateway = ctx.gateway()?;
            let options = AnnotateOptions {
                char_budget: s.char_budget,
                workers: ctx.workers,
            };
            let (docs, probe) = track(ctx, doc_source(io.all(&s.inputs), s.source));
            let mut writer = CorpusWriter::create(out)?;
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            let mut written = 0;
            for label in annotate_documents(docs, gateway, &options) {
                writer.write_record(&label)?;
                written += 1;
                let key = match (label.status, label.type_code) {
                    (LabelStatus::Parsed, Some(t)) => t.to_string(),
                    (LabelStatus::Failed, _) => "failed".into(),
                    _ => "unparseable".into(),
                };
                *counts.entry(key).or_default() += 1;
            }
            writer.finish()?;
            Ok(Outcome {
                input: probe.finish()?,
                output: Tally {
                    documents: written,
                    tokens: 0,
                },
                extra_outputs: Vec::new(),
                details: json!({ "labels": counts }),
            })
        }

        Stage::FilterCode(s) => {
            let filter = match &s.packages {
                Some(p) => ImportFilter::new(p.iter().cloned()),
                None => ImportFilter::default(),
            };
            filter_documents(io.all(&s.inputs), s.source, out, ctx, |d| filter.matches(&d.text))
        }

        Stage::FilterTextbooks(s) => {
            let keywords: Vec<String> = match &s.keywords {
                Some(k) => k.clone(),
                None => DEFAULT_KEYWORDS.iter().map(|k| k.to_string()).collect(),
            };
            filter_documents(io.all(&s.inputs), s.source, out, ctx, |d| {
                filter_textbook_by_title(&textbook_title(d), &keywords)
            })
        }

        Stage::Extract(s) => {
            let gateway = ctx.gateway()?;
            let options = ExtractOptions {
                char_budget: s.char_budget,
            };
            let (docs, probe) = track(ctx, doc_source(io.all(&s.inputs), s.source));
            let mut sink = Sink::create(out, ctx)?;
            match s.mode {
                ExtractMode::Computations => {
                    let reports_path = sibling(out, "reports.jsonl");
                    let mut reports = CorpusWriter::create(&reports_path)?;
                    let mut found = 0;
                    let mut failures = 0;
                    let mut rejects: BTreeMap<String, u64> = BTreeMap::new();
                    let results = OrderedMap::new(docs, ctx.workers, ctx.workers * 4, |d: Document| {
                        extract_computations(&d, gateway, &options)
                    });
                    for (computations, report) in results {
                        for c in &computations {
                            sink.put(c)?;
                        }
                        found += report.blocks_found;
                        failures += usize::from(report.failure.is_some());
                        for r in &report.reject_reasons {
                            *rejects.entry(r.reason.clone()).or_default() += 1;
                        }
                        reports.write_record(&report)?;
                    }
                    reports.finish()?;
                    let output = sink.finish()?;
                    Ok(Outcome {
                        input: probe.finish()?,
                        details: json!({
                            "blocks_found": found,
                            "blocks_valid": output.documents,
                            "failed_requests": failures,
                            "rejects": rejects,
                        }),
                        output,
                        extra_outputs: vec![reports_path],
                    })
                }
                ExtractMode::Rewrite => {
                    let mut failed = 0;
                    let results = OrderedMap::new(docs, ctx.workers, ctx.workers * 4, |d: Document| {
                        rewrite_document(&d, gateway, &options)
                    });
                    for doc in results {
                        match doc {
                            Some(d) => sink.put(&d)?,
                            None => failed += 1,
                        }
                    }
                    Ok(Outcome {
                        input: probe.finish()?,
                        output: sink.finish()?,
                        extra_outputs: Vec::new(),
                        details: json!({ "failed_requests": failed }),
                    })
                }
            }
        }

        Stage::Verify(s) => {
            let pool = SandboxPool::new(ctx.runner.clone(), ctx.workers);
            let mut verifier = Verifier::new(pool)
                .with_limits(s.limits)
                .with_policy(s.tolerance)
                .with_unverifiable(s.unverifiable);
            verifier.max_requeues = s.max_requeues;
            let (items, probe) = track(ctx, computation_source(io.all(&s.inputs)));
            let verdicts_path = sibling(out, "verdicts.jsonl");
            let mut verdicts = CorpusWriter::create(&verdicts_path)?;
            let mut sink = Sink::create(out, ctx)?;
            let mut report = VerifyReport::default();
            for v in verify_stream(items, &verifier) {
                report.add(&v);
                if v.retained {
                    sink.put(&v.computation)?;
                }
                verdicts.write_record(&v)?;
            }
            verdicts.finish()?;
            let input = probe.finish()?;
            let output = sink.finish()?;
            let mut details = serde_json::to_value(&report)?;
            details["retention_ratio"] = json!(report.retention_ratio());
            Ok(Outcome {
                input,
                output,
                extra_outputs: vec![verdicts_path],
                details,
            })
        }

        Stage::Compose(s) => {
            let (items, probe) = track(ctx, computation_source(io.all(&s.inputs)));
            let mut sink = Sink::create(out, ctx)?;
            for c in items {
                sink.put(&compose_training_document(&c, s.mode).into_document()?)?;
            }
            Ok(Outcome {
                input: probe.finish()?,
                output: sink.finish()?,
                extra_outputs: Vec::new(),
                details: json!({ "mode": s.mode }),
            })
        }

        Stage::Dedup(s) => {
            let (docs, probe) = track(ctx, doc_source(io.all(&s.inputs), s.source));
            let mut sink = Sink::create(out, ctx)?;
            for doc in exact_dedup(docs) {
                sink.put(&doc)?;
            }
            Ok(Outcome {
                input: probe.finish()?,
                output: sink.finish()?,
                extra_outputs: Vec::new(),
                details: serde_json::Value::Null,
            })
        }

        Stage::Decontaminate(s) => {
            let mut questions = Vec::new();
            let mut names = Vec::new();
            for raw in &s.benchmarks {
                let path = (io.resolve)(raw);
                let name = path
                    .file_stem()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let set = BenchmarkSet::load(&path, name.clone())
                    .with_context(|| format!("loading benchmark {}", path.display()))?;
                questions.extend(set.questions.into_iter().map(|q| (q.id, q.text)));
                names.push(name);
            }
            let bench = BenchmarkSet::new(names.join("+"), questions)?;
            let config = DecontamConfig {
                threshold: s.threshold,
                mode: s.mode,
                workers: ctx.workers,
            };
            let dec = Decontaminator::new(bench, config)?;
            let removed_path = sibling(out, "removed.jsonl");
            let mut removed = CorpusWriter::create(&removed_path)?;
            let mut by_reason: BTreeMap<String, u64> = BTreeMap::new();
            let (docs, probe) = track(ctx, doc_source(io.all(&s.inputs), s.source));
            let mut sink = Sink::create(out, ctx)?;
            for (doc, removal) in decontaminate_stream(docs, &dec) {
                match removal {
                    Some(r) => {
                        *by_reason.entry(format!("{:?}", r.reason).to_lowercase()).or_default() += 1;
                        removed.write_record(&r)?;
                    }
                    None => sink.put(&doc)?,
                }
            }
            removed.finish()?;
            Ok(Outcome {
                input: probe.finish()?,
                output: sink.finish()?,
                extra_outputs: vec![removed_path],
                details: json!({
                    "questions": dec.benchmark().len(),
                    "mode": s.mode,
                    "threshold": s.threshold,
                    "removed": by_reason,
                }),
            })
        }

        Stage::Stats(s) => {
            let (docs, probe) = track(ctx, doc_source(io.all(&s.inputs), s.source));
            let stats = compute_stats(docs, &ctx.counter, ctx.workers);
            let input = probe.finish()?;
            write_text(out, &render_report(&stats, ReportFormat::Table))?;
            let csv_path = sibling(out, "csv");
            write_text(&csv_path, &render_report(&stats, ReportFormat::Csv))?;
            let mut extra_outputs = vec![csv_path];
            if !io.manifests.is_empty() {
                let rows: Vec<RetentionRow> = io
                    .manifests
                    .iter()
                    .map(|(stage, path)| RetentionRow {
                        stage: stage.clone(),
                        manifest: StageManifest::read(path).ok(),
                    })
                    .collect();
                let path = sibling(out, "retention.txt");
                write_text(&path, &retention_report(&rows))?;
                extra_outputs.push(path);
            }
            Ok(Outcome {
                input,
                output: Tally::default(),
                extra_outputs,
                details: serde_json::to_value(&stats)?,
            })
        }
    }
}

fn filter_documents(
    inputs: Vec<PathBuf>,
    source: Source,
    out: &Path,
    ctx: &Context,
    keep: impl Fn(&Document) -> bool,
) -> anyhow::Result<Outcome> {
    let (docs, probe) = track(ctx, doc_source(inputs, source));
    let mut sink = Sink::create(out, ctx)?;
    for doc in docs.filter(|d| keep(d)) {
        sink.put(&doc)?;
    }
    Ok(Outcome {
        input: probe.finish()?,
        output: sink.finish()?,
        extra_outputs: Vec::new(),
        details: serde_json::Value::Null,
    })
}

fn tally_documents(path: &Path, source: Source, ctx: &Context) -> anyhow::Result<Tally> {
    let (docs, probe) = track(ctx, doc_source(vec![path.to_path_buf()], source));
    docs.for_each(drop);
    probe.finish()
}

/// Write through a temporary sibling so readers never see a partial file.
fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
