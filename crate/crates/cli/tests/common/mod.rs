#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mathcode_core::corpus::CorpusWriter;
use mathcode_core::extraction::ExtractedComputation;
use mathcode_core::gateway::{render_prompt, ChatRequest, FinishReason, FixtureBackend, Template};
use mathcode_core::{Document, Source};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_mathcode");

pub fn core_fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(rel)
}

pub fn mathcode(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn mathcode")
}

pub const MATH: &[&str] = &[
    "theorem",
    "lemma",
    "proof",
    "integral",
    "derivative",
    "equation",
    "polynomial",
    "matrix",
    "vector",
    "prime",
    "divisor",
    "probability",
    "variance",
    "limit",
    "converges",
    "series",
    "function",
    "solve",
    "root",
    "coefficient",
    "triangle",
    "angle",
    "radius",
    "modulo",
    "factorial",
    "binomial",
    "eigenvalue",
    "$x^2$",
    "$\\frac{1}{2}$",
    "$n$",
    "sum",
    "product",
    "inequality",
    "integer",
    "rational",
    "compute",
];

pub const GENERAL: &[&str] = &[
    "weather",
    "festival",
    "restaurant",
    "travel",
    "museum",
    "election",
    "football",
    "recipe",
    "garden",
    "concert",
    "novel",
    "painting",
    "village",
    "market",
    "holiday",
    "river",
    "mountain",
    "fashion",
    "coffee",
    "history",
    "parliament",
    "actor",
    "film",
    "church",
    "harbor",
    "railway",
    "costume",
    "song",
    "weekend",
    "shopping",
    "hotel",
    "beach",
    "castle",
    "guitar",
    "theater",
    "wine",
];

const GLUE: &[&str] = &[
    "the", "a", "of", "and", "is", "in", "we", "that", "for", "with", "this", "to",
];

pub fn text(rng: &mut ChaCha8Rng, topical: &[&str], sentences: usize) -> String {
    let mut out = Vec::new();
    for _ in 0..sentences {
        let n = rng.gen_range(6..14);
        let words: Vec<&str> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    *topical.choose(rng).unwrap()
                } else {
                    *GLUE.choose(rng).unwrap()
                }
            })
            .collect();
        out.push(format!("{}.", words.join(" ")));
    }
    out.join(" ")
}

pub const BENCH_QUESTION: &str =
    "A fair coin is tossed ten times. What is the probability of getting exactly five heads in those tosses?";

/// How a recorded computation should fare in verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planted {
    Correct,
    WrongOutput,
    Crash,
}

fn computation(i: usize) -> (ExtractedComputation, Planted) {
    let (a, b) = (11 + i as i64, 7 + 2 * i as i64);
    let base = ExtractedComputation {
        source_doc_id: String::new(),
        block_index: 0,
        conditions: vec![format!("$a = {a}$"), format!("$b = {b}$")],
        expression: format!("a \\times b = {a} \\times {b}"),
        expected_result: format!("{}", a * b),
        code: format!("a = {a}\nb = {b}\nprint(a * b)"),
    };
    match i % 7 {
        3 => (
            ExtractedComputation {
                expected_result: format!("{}", a * b + 1),
                ..base
            },
            Planted::WrongOutput,
        ),
        4 => (
            ExtractedComputation {
                code: format!("a = {a}\nprint(a / 0)"),
                ..base
            },
            Planted::Crash,
        ),
        5 => (
            ExtractedComputation {
                expression: format!("\\frac{{{a}}}{{{b}}}"),
                expected_result: format!("\\frac{{{a}}}{{{b}}}"),
                code: format!("print({a} / {b})"),
                ..base
            },
            Planted::Correct,
        ),
        6 => {
            let n = 10 + i as u64;
            let comb = (1..=3u64).fold(1, |acc, k| acc * (n + 1 - k) / k);
            (
                ExtractedComputation {
                    expression: format!("{{{n} \\choose 3}}"),
                    expected_result: format!("{comb}"),
                    code: format!("import math\nprint(math.comb({n}, 3))"),
                    ..base
                },
                Planted::Correct,
            )
        }
        _ => (base, Planted::Correct),
    }
}

fn record(fixtures: &Path, template: Template, text: &str, reply: &str) {
    let prompt = render_prompt(template, text).unwrap();
    FixtureBackend::record(fixtures, &ChatRequest::user("m", prompt), reply, FinishReason::Complete).unwrap();
}

/// Layout of a generated workspace.
pub struct Corpus {
    pub config: PathBuf,
    pub documents: usize,
    /// Computations recorded for the math web documents, by planted fate.
    pub planted: Vec<(ExtractedComputation, Planted)>,
}

const PIPELINE: &str = r#"seed = 7
output_dir = "out"

[gateway]
fixtures = "fixtures"

[[stage]]
kind = "train-classifier"
name = "seed"
positive = ["data/seed_pos.jsonl"]
negative = ["data/seed_neg.jsonl"]

[[stage]]
kind = "filter-web"
name = "web"
inputs = ["data/web.jsonl"]
stage1_model = "@seed"
stage1_threshold = 0.2
classifier = { epochs = 25 }

[[stage]]
kind = "filter-code"
name = "code"
inputs = ["data/code.jsonl"]

[[stage]]
kind = "filter-textbooks"
name = "books"
inputs = ["data/textbooks.jsonl"]

[[stage]]
kind = "extract"
name = "steps"
inputs = ["@web"]

[[stage]]
kind = "verify"
name = "verified"
inputs = ["@steps"]

[[stage]]
kind = "compose"
name = "composed"
inputs = ["@verified"]

[[stage]]
kind = "dedup"
name = "basic"
inputs = ["@web", "@code", "@books", "@composed"]

[[stage]]
kind = "decontaminate"
name = "clean"
inputs = ["@basic"]
benchmarks = ["data/bench.jsonl"]

[[stage]]
kind = "stats"
name = "report"
inputs = ["@clean"]
"#;

/// Write a 50-document fixture corpus (40 web, 6 code, 4 textbook) with
/// recorded model replies and a pipeline file under `root`. `extra` more
/// documents are appended that need no model call: general web text the
/// seed classifier rejects, code and textbooks.
pub fn build_corpus(root: &Path, extra: usize) -> Corpus {
    let data = root.join("data");
    let fixtures = root.join("fixtures");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::create_dir_all(&fixtures).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_917);

    let mut pos = CorpusWriter::create(data.join("seed_pos.jsonl")).unwrap();
    let mut neg = CorpusWriter::create(data.join("seed_neg.jsonl")).unwrap();
    for _ in 0..200 {
        pos.write(&Document::new(Source::Web, text(&mut rng, MATH, 4)).unwrap())
            .unwrap();
        neg.write(&Document::new(Source::Web, text(&mut rng, GENERAL, 4)).unwrap())
            .unwrap();
    }
    pos.finish().unwrap();
    neg.finish().unwrap();

    let mut web = CorpusWriter::create(data.join("web.jsonl")).unwrap();
    let mut planted = Vec::new();
    let mut first_math = None;
    for i in 0..28 {
        let (c, fate) = computation(i);
        let mut body = format!("{} Compute {}.", text(&mut rng, MATH, 3), c.expression);
        if i == 9 {
            body = format!("{body}\n{BENCH_QUESTION}");
        }
        let doc = Document::new(Source::Web, body).unwrap();
        record(&fixtures, Template::Annotation, &doc.text, "The type is: 1");
        record(&fixtures, Template::Extraction, &doc.text, &c.render());
        web.write(&doc).unwrap();
        planted.push((c, fate));
        first_math.get_or_insert(doc);
    }
    for _ in 0..8 {
        let body = format!("{} {}", text(&mut rng, GENERAL, 2), text(&mut rng, MATH, 2));
        let doc = Document::new(Source::Web, body).unwrap();
        record(&fixtures, Template::Annotation, &doc.text, "The type is: 7");
        web.write(&doc).unwrap();
    }
    for _ in 0..3 {
        let doc = Document::new(Source::Web, text(&mut rng, GENERAL, 4)).unwrap();
        record(&fixtures, Template::Annotation, &doc.text, "The type is: 7");
        web.write(&doc).unwrap();
    }
    web.write(first_math.as_ref().unwrap()).unwrap();

    let mut code = CorpusWriter::create(data.join("code.jsonl")).unwrap();
    let snippets = [
        "import sympy as sp\nx = sp.symbols('x')\nprint(sp.diff(x**3, x))",
        "from fractions import Fraction\nprint(Fraction(3, 4) + Fraction(1, 4))",
        "import scipy.stats as st\nprint(st.norm.cdf(0))",
        "import statistics\nprint(statistics.mean([1, 2, 3]))",
        "import numpy as np\nprint(np.zeros(3))",
        "import requests\nprint(requests.get('http://example.com').status_code)",
    ];
    for s in snippets {
        code.write(&Document::new(Source::Code, s).unwrap()).unwrap();
    }

    let mut books = CorpusWriter::create(data.join("textbooks.jsonl")).unwrap();
    let titles = [
        "Introduction to Calculus",
        "Elementary Probability",
        "A History of Rome",
        "Cooking at Home",
    ];
    for t in titles {
        let doc = Document::new(Source::Textbook, format!("# {t}\n\n{}", text(&mut rng, MATH, 6))).unwrap();
        books.write(&doc.with_meta("title", t)).unwrap();
    }

    for i in 0..extra {
        match i % 20 {
            0..=11 => web
                .write(&Document::new(Source::Web, text(&mut rng, GENERAL, 4)).unwrap())
                .unwrap(),
            12..=16 => {
                let import = if i % 2 == 0 { "import sympy" } else { "import numpy" };
                let body = format!("{import}\n# {}\nprint({i})", text(&mut rng, GENERAL, 1));
                code.write(&Document::new(Source::Code, body).unwrap()).unwrap()
            }
            _ => {
                let t = if i % 2 == 0 { "Linear Algebra" } else { "Garden Design" };
                let doc = Document::new(Source::Textbook, format!("{t} {i}\n\n{}", text(&mut rng, MATH, 4))).unwrap();
                books.write(&doc.with_meta("title", format!("{t} {i}"))).unwrap()
            }
        }
    }
    web.finish().unwrap();
    code.finish().unwrap();
    books.finish().unwrap();

    std::fs::write(
        data.join("bench.jsonl"),
        format!("{}\n", serde_json::json!({"id": "coins-1", "text": BENCH_QUESTION})),
    )
    .unwrap();
    let config = root.join("pipeline.toml");
    std::fs::write(&config, PIPELINE).unwrap();
    Corpus {
        config,
        documents: 50 + extra,
        planted,
    }
}

/// Every file below `dir` except manifests, as (relative path, bytes).
pub fn outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with(".manifest.json") {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}
