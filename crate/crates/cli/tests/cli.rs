mod common;

use std::path::Path;

use common::{build_corpus, mathcode, outputs};
use mathcode_core::corpus::read_records;
use mathcode_core::extraction::ExtractedComputation;
use mathcode_core::manifest::StageManifest;

fn run(config: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    mathcode(&args)
}

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn pipeline_runs_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = build_corpus(dir.path(), 0);
    let first = run(&corpus.config, &[]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let out = dir.path().join("out");
    for name in [
        "seed.mcft",
        "web.jsonl",
        "steps.jsonl",
        "verified.jsonl",
        "composed.jsonl",
        "report.txt",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let verify = StageManifest::read(out.join("verified.manifest.json")).unwrap();
    // the first math document appears twice in the raw web corpus
    let planted_ok = corpus
        .planted
        .iter()
        .filter(|(_, f)| *f == common::Planted::Correct)
        .count() as u64
        + 1;
    assert_eq!(verify.output_documents, planted_ok);
    let web = StageManifest::read(out.join("web.manifest.json")).unwrap();
    assert_eq!(web.output_documents, 29);
    let clean = StageManifest::read(out.join("clean.manifest.json")).unwrap();
    assert_eq!(clean.details["removed"]["exact"], 1);

    let before = outputs(&out);
    let second = run(&corpus.config, &[]);
    assert!(second.status.success());
    let lines = stdout(&second);
    assert_eq!(lines.lines().count(), 10);
    assert!(lines.lines().all(|l| l.contains("skipped")), "{lines}");
    assert_eq!(outputs(&out), before);

    // touching an input reruns the stages downstream of it only
    let books = dir.path().join("data/textbooks.jsonl");
    let mut text = std::fs::read_to_string(&books).unwrap();
    text.push_str("{\"text\": \"Topics in Geometry\\nmore\", \"source\": \"textbook\"}\n");
    std::fs::write(&books, text).unwrap();
    let third = stdout(&run(&corpus.config, &[]));
    let ran: Vec<&str> = third
        .lines()
        .filter(|l| l.contains(" ran "))
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(ran, ["books", "basic", "clean", "report"]);

    let forced = stdout(&run(&corpus.config, &["--force"]));
    assert!(forced.lines().all(|l| l.contains(" ran ")));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("p.toml");
    std::fs::write(
        &config,
        "[[stage]]\nkind = \"dedup\"\nname = \"d\"\ninputs = [\"missing.jsonl\"]\n",
    )
    .unwrap();
    let o = run(&config, &["--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));

    std::fs::write(&config, "[[stage]]\nkind = \"dedup\"\nnam = \"d\"\n").unwrap();
    assert_eq!(run(&config, &[]).status.code(), Some(2));
    assert_eq!(
        mathcode(&["dedup", "-i", "nope.jsonl", "-o", "x.jsonl"]).status.code(),
        Some(2)
    );
    assert_eq!(mathcode(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn compose_modes_differ_only_in_code() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = build_corpus(dir.path(), 0);
    assert!(run(&corpus.config, &[]).status.success());
    let verified = dir.path().join("out/verified.jsonl");
    let both = dir.path().join("both.jsonl");
    let steps = dir.path().join("steps.jsonl");
    for (mode, out) in [("step_and_code", &both), ("step_only", &steps)] {
        let o = mathcode(&[
            "compose",
            "-i",
            verified.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let both = std::fs::read_to_string(both).unwrap();
    let steps = std::fs::read_to_string(steps).unwrap();
    let texts = |s: &str| -> Vec<String> {
        s.lines()
            .map(|l| {
                serde_json::from_str::<serde_json::Value>(l).unwrap()["text"]
                    .as_str()
                    .unwrap()
                    .to_string()
            })
            .collect()
    };
    let computations: Vec<ExtractedComputation> = read_records(&verified).unwrap().map(Result::unwrap).collect();
    assert!(!computations.is_empty());
    for ((with, without), c) in texts(&both).iter().zip(texts(&steps)).zip(&computations) {
        assert!(with.contains(&c.code));
        assert!(!without.contains(&c.code));
        assert!(with.starts_with(without.trim_end()));
    }
}

#[test]
fn single_stage_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    build_corpus(dir.path(), 0);
    let input = dir.path().join("data/code.jsonl");
    let out = dir.path().join("kept.jsonl");
    let o = mathcode(&[
        "filter-code",
        "-i",
        input.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let m = StageManifest::read(dir.path().join("kept.manifest.json")).unwrap();
    assert_eq!((m.input_documents, m.output_documents), (6, 4));
    assert!(m.outputs[0].is_intact());
}
