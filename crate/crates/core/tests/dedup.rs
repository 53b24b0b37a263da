use std::collections::HashSet;

use mathcode_core::corpus::word_tokens;
use mathcode_core::dedup::{
    decontaminate, exact_dedup, similarity_13gram, BenchmarkSet, CandidateIndex, DecontamConfig, Decontaminator,
    RemovalReason, ShingleSet, SimilarityMode,
};
use mathcode_core::{Document, Source};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn doc(text: &str) -> Document {
    Document::new(Source::Web, text).unwrap()
}

fn random_words(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<String> {
    (0..n).map(|_| format!("t{}", rng.gen_range(0..vocab))).collect()
}

/// Questions plus documents that copy none, part or all of one of them,
/// sometimes verbatim and sometimes with changed punctuation and case. A
/// fifth of the documents have almost no text of their own.
fn planted(n_docs: usize, n_questions: usize, seed: u64) -> (Vec<(String, String)>, Vec<Document>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let questions: Vec<(String, String)> = (0..n_questions)
        .map(|i| {
            let n = rng.gen_range(8..40);
            (format!("q{i}"), random_words(&mut rng, n, 5000).join(" "))
        })
        .collect();
    let docs = (0..n_docs)
        .map(|_| {
            let n = if rng.gen_bool(0.2) {
                rng.gen_range(1..6)
            } else {
                rng.gen_range(5..120)
            };
            let mut words = random_words(&mut rng, n, 300);
            if rng.gen_bool(0.6) {
                let q: Vec<&str> = questions.choose(&mut rng).unwrap().1.split(' ').collect();
                let len = rng.gen_range(1..=q.len());
                let start = rng.gen_range(0..=q.len() - len);
                let mut span: Vec<String> = q[start..start + len].iter().map(|w| w.to_string()).collect();
                if rng.gen_bool(0.5) {
                    span = span.into_iter().map(|w| format!("{},", w.to_uppercase())).collect();
                }
                let at = rng.gen_range(0..=words.len());
                words.splice(at..at, span);
            }
            doc(&words.join(" "))
        })
        .collect();
    (questions, docs)
}

/// 13-grams as token vectors; no hashing involved.
fn grams(text: &str) -> HashSet<Vec<String>> {
    word_tokens(text).windows(13).map(|w| w.to_vec()).collect()
}

fn oracle_similarity(a: &str, b: &str, mode: SimilarityMode) -> f64 {
    let (a, b) = (grams(a), grams(b));
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let common = a.intersection(&b).count() as f64;
    match mode {
        SimilarityMode::Jaccard => common / a.union(&b).count() as f64,
        SimilarityMode::Containment => common / a.len().min(b.len()) as f64,
    }
}

fn normalized(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ids of documents removed by scoring every (doc, question) pair.
fn oracle_removed(
    docs: &[Document],
    questions: &[(String, String)],
    threshold: f64,
    mode: SimilarityMode,
) -> Vec<String> {
    docs.iter()
        .filter(|d| {
            questions.iter().any(|(_, q)| {
                normalized(&d.text).contains(&normalized(q)) || oracle_similarity(&d.text, q, mode) > threshold
            })
        })
        .map(|d| d.id.clone())
        .collect()
}

fn decontaminator(questions: &[(String, String)], threshold: f64, mode: SimilarityMode) -> Decontaminator {
    let bench = BenchmarkSet::new("bench", questions.iter().cloned()).unwrap();
    Decontaminator::new(
        bench,
        DecontamConfig {
            threshold,
            mode,
            workers: 4,
        },
    )
    .unwrap()
}

#[test]
fn indexed_removals_equal_exhaustive_oracle() {
    let (questions, docs) = planted(200, 20, 3);
    for mode in [SimilarityMode::Containment, SimilarityMode::Jaccard] {
        let dec = decontaminator(&questions, 0.6, mode);
        let (clean, removed) = decontaminate(docs.clone(), &dec);
        let got: Vec<String> = removed.iter().map(|r| r.doc_id.clone()).collect();
        assert_eq!(got, oracle_removed(&docs, &questions, 0.6, mode), "{mode}");
        assert_eq!(clean.len() + removed.len(), docs.len());
        assert!(removed.iter().any(|r| r.reason == RemovalReason::Exact));
        assert!(removed.iter().any(|r| r.reason == RemovalReason::Ngram), "{mode}");
        for d in &docs {
            assert_eq!(dec.check(d), dec.check_exhaustive(d));
        }
    }
}

#[test]
fn verbatim_copies_always_removed() {
    let (questions, _) = planted(0, 20, 4);
    let dec = decontaminator(&questions, 1.0, SimilarityMode::Jaccard);
    for (id, q) in &questions {
        let r = dec.check(&doc(&format!("Problem 3.\n{q}\nSolution follows."))).unwrap();
        assert_eq!(r.reason, RemovalReason::Exact);
        assert_eq!(&r.question_id, id);
    }
}

#[test]
fn exact_dedup_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pool: Vec<String> = (0..700).map(|_| random_words(&mut rng, 6, 50).join(" ")).collect();
    let docs: Vec<Document> = (0..1000).map(|_| doc(pool.choose(&mut rng).unwrap())).collect();
    let want: Vec<Document> = docs
        .iter()
        .enumerate()
        .filter(|(i, d)| docs[..*i].iter().all(|e| e.text != d.text))
        .map(|(_, d)| d.clone())
        .collect();
    let filtered = exact_dedup(docs.clone());
    let counts = filtered.handle();
    let got: Vec<Document> = filtered.collect();
    assert_eq!(got, want);
    assert_eq!(counts.get().input, 1000);
    assert_eq!(counts.get().output as usize, want.len());
}

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(0u8..6, 0..40).prop_map(|ws| ws.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" "))
}

proptest! {
    #[test]
    fn similarity_properties(a in text_strategy(), b in text_strategy()) {
        let (sa, sb) = (ShingleSet::from_text("a", &a), ShingleSet::from_text("b", &b));
        prop_assert!(sa.len() <= sa.token_count.saturating_sub(12));
        for mode in [SimilarityMode::Jaccard, SimilarityMode::Containment] {
            let s = similarity_13gram(&sa, &sb, mode);
            prop_assert_eq!(s, similarity_13gram(&sb, &sa, mode));
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - oracle_similarity(&a, &b, mode)).abs() < 1e-12);
            if mode == SimilarityMode::Jaccard {
                prop_assert_eq!(s == 1.0, !sa.is_empty() && sa.shingles == sb.shingles);
            }
        }
    }

    #[test]
    fn index_is_superset_complete(texts in prop::collection::vec(text_strategy(), 1..12), probe in text_strategy()) {
        let sets: Vec<ShingleSet> = texts.iter().map(|t| ShingleSet::from_text("d", t)).collect();
        let index = CandidateIndex::build(&sets);
        let p = ShingleSet::from_text("p", &probe);
        let hits = index.query(&p);
        for (i, s) in sets.iter().enumerate() {
            if s.intersection_len(&p) > 0 {
                prop_assert!(hits.contains(&i));
            }
        }
    }

    #[test]
    fn exact_dedup_is_idempotent(ws in prop::collection::vec(0u8..5, 0..30)) {
        let docs: Vec<Document> = ws.iter().map(|w| doc(&format!("text {w}"))).collect();
        let once: Vec<Document> = exact_dedup(docs).collect();
        let twice: Vec<Document> = exact_dedup(once.clone()).collect();
        prop_assert_eq!(once, twice);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn raising_threshold_never_removes_more(seed in 0u64..50, t in 0.05f64..0.95, dt in 0.0f64..0.5) {
        let (questions, docs) = planted(30, 5, seed);
        let low = decontaminate(docs.clone(), &decontaminator(&questions, t, SimilarityMode::Containment)).1;
        let high_t = (t + dt).min(1.0);
        let high = decontaminate(docs, &decontaminator(&questions, high_t, SimilarityMode::Containment)).1;
        let low: HashSet<_> = low.into_iter().map(|r| r.doc_id).collect();
        prop_assert!(high.iter().all(|r| low.contains(&r.doc_id)));
    }
}
