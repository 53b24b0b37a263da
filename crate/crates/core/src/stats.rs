//! Corpus statistics per component and per-stage retention reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Source, TokenCounter};
use crate::manifest::StageManifest;
use crate::par::OrderedMap;

pub const HEADERS: [&str; 5] = ["Components", "Size (MB)", "Documents", "Tokens", "Average (Tokens)"];
pub const TOTAL_LABEL: &str = "Total";

const BYTES_PER_MB: f64 = (1u64 << 20) as f64;

pub fn component_label(source: Source) -> &'static str {
    match source {
        Source::Web => "Web",
        Source::Synthetic => "Synthetic data",
        Source::Code => "Code using math packages",
        Source::Textbook => "Mathematical textbooks",
        Source::TranslatedCode => "Translated mathematical code",
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    bytes: u64,
    documents: u64,
    tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub component: String,
    pub size_mb: f64,
    pub documents: u64,
    pub tokens: u64,
    pub average_tokens: f64,
}

impl ComponentStats {
    pub fn from_counts(component: impl Into<String>, bytes: u64, documents: u64, tokens: u64) -> Self {
        ComponentStats {
            component: component.into(),
            size_mb: bytes as f64 / BYTES_PER_MB,
            documents,
            tokens,
            average_tokens: if documents == 0 {
                0.0
            } else {
                tokens as f64 / documents as f64
            },
        }
    }

    fn from_tally(component: &str, t: Tally) -> Self {
        Self::from_counts(component, t.bytes, t.documents, t.tokens)
    }
}

/// Component rows in source order, then the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub rows: Vec<ComponentStats>,
    pub total: ComponentStats,
}

/// Statistics over `docs`, counting tokens with `counter` on `workers`
/// threads. Size is the UTF-8 length of the text alone.
pub fn compute_stats<I>(docs: I, counter: &TokenCounter, workers: usize) -> CorpusStats
where
    I: IntoIterator<Item = Document>,
{
    let mut tallies: BTreeMap<Source, Tally> = BTreeMap::new();
    let workers = workers.max(1);
    let per_doc = OrderedMap::new(docs.into_iter(), workers, workers * 64, |d: Document| {
        (d.source, d.text.len() as u64, counter.count(&d.text) as u64)
    });
    for (source, bytes, tokens) in per_doc {
        let t = tallies.entry(source).or_default();
        t.bytes += bytes;
        t.documents += 1;
        t.tokens += tokens;
    }
    let mut total = Tally::default();
    let rows = tallies
        .into_iter()
        .map(|(source, t)| {
            total.bytes += t.bytes;
            total.documents += t.documents;
            total.tokens += t.tokens;
            ComponentStats::from_tally(component_label(source), t)
        })
        .collect();
    CorpusStats {
        rows,
        total: ComponentStats::from_tally(TOTAL_LABEL, total),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (table or csv)")),
        }
    }
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn table(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, " | {cell:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out += &rule.join("-+-");
    out.push('\n');
    for row in body {
        out += &line(row);
    }
    out
}

/// Render as an aligned text table (sizes to two decimals, averages to the
/// nearest token) or as CSV with full precision.
pub fn render_report(stats: &CorpusStats, format: ReportFormat) -> String {
    let all = stats.rows.iter().chain(std::iter::once(&stats.total));
    match format {
        ReportFormat::Table => {
            let body: Vec<Vec<String>> = all
                .map(|r| {
                    vec![
                        r.component.clone(),
                        format!("{:.2}", r.size_mb),
                        thousands(r.documents),
                        thousands(r.tokens),
                        thousands(r.average_tokens.round() as u64),
                    ]
                })
                .collect();
            table(&HEADERS, &body)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(HEADERS).expect("in-memory csv");
            for r in all {
                w.write_record([
                    r.component.clone(),
                    r.size_mb.to_string(),
                    r.documents.to_string(),
                    r.tokens.to_string(),
                    r.average_tokens.to_string(),
                ])
                .expect("in-memory csv");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
        }
    }
}

/// Parse the CSV written by [`render_report`]; the last row is the total.
pub fn parse_csv_report(text: &str) -> Result<CorpusStats, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| e.to_string())?;
        let field = |i: usize| r.get(i).ok_or_else(|| format!("missing column {}", i + 1));
        let num = |i: usize| -> Result<f64, String> { field(i)?.parse().map_err(|e| format!("{e}")) };
        let int = |i: usize| -> Result<u64, String> { field(i)?.parse().map_err(|e| format!("{e}")) };
        rows.push(ComponentStats {
            component: field(0)?.to_string(),
            size_mb: num(1)?,
            documents: int(2)?,
            tokens: int(3)?,
            average_tokens: num(4)?,
        });
    }
    let total = rows.pop().ok_or("no total row")?;
    Ok(CorpusStats { rows, total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetentionRow {
    pub stage: String,
    /// `None` when the stage has no manifest.
    pub manifest: Option<StageManifest>,
}

impl RetentionRow {
    pub fn ratio(&self) -> Option<f64> {
        let m = self.manifest.as_ref()?;
        (m.input_documents > 0).then(|| m.output_documents as f64 / m.input_documents as f64)
    }

    pub fn token_ratio(&self) -> Option<f64> {
        let m = self.manifest.as_ref()?;
        (m.input_tokens > 0).then(|| m.output_tokens as f64 / m.input_tokens as f64)
    }
}

/// Per-stage document and token counts with retention ratios. Stages
/// without a manifest are marked `unknown`; an empty input gives `n/a`.
pub fn retention_report(rows: &[RetentionRow]) -> String {
    let header = [
        "Stage",
        "Docs in",
        "Docs out",
        "Tokens in",
        "Tokens out",
        "Retention",
        "Token retention",
    ];
    let ratio = |m: &Option<StageManifest>, r: Option<f64>| match (m, r) {
        (None, _) => "unknown".to_string(),
        (Some(_), None) => "n/a".to_string(),
        (Some(_), Some(r)) => format!("{r:.3}"),
    };
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| match &row.manifest {
            None => {
                let mut cells = vec![row.stage.clone()];
                cells.extend(std::iter::repeat_n("unknown".to_string(), 6));
                cells
            }
            Some(m) => vec![
                row.stage.clone(),
                thousands(m.input_documents),
                thousands(m.output_documents),
                thousands(m.input_tokens),
                thousands(m.output_tokens),
                ratio(&row.manifest, row.ratio()),
                ratio(&row.manifest, row.token_ratio()),
            ],
        })
        .collect();
    table(&header, &body)
}
