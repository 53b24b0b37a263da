use mathcode_core::corpus::count_tokens;
use mathcode_core::stats::{
    compute_stats, parse_csv_report, render_report, ComponentStats, CorpusStats, ReportFormat, HEADERS,
};
use mathcode_core::{Document, Source, TokenCounter};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pieces = ["x", "=", "42", "théorème", "(a+b)", "∑", "import", "sympy", "\n", "."];
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..60);
            let text: Vec<&str> = (0..len).map(|_| *pieces.choose(&mut rng).unwrap()).collect();
            let source = *Source::ALL.choose(&mut rng).unwrap();
            Document::new(source, format!("doc {}", text.join(" "))).unwrap()
        })
        .collect()
}

#[test]
fn totals_equal_per_document_sums() {
    let docs = random_corpus(500, 11);
    let counter = TokenCounter::whitespace();
    let stats = compute_stats(docs.clone(), &counter, 4);

    for source in Source::ALL {
        let mine: Vec<&Document> = docs.iter().filter(|d| d.source == source).collect();
        let row = stats
            .rows
            .iter()
            .find(|r| r.component == mathcode_core::stats::component_label(source));
        let Some(row) = row else {
            assert!(mine.is_empty());
            continue;
        };
        let tokens: u64 = mine.iter().map(|d| count_tokens(&counter, &d.text) as u64).sum();
        let bytes: usize = mine.iter().map(|d| d.text.len()).sum();
        assert_eq!(row.documents, mine.len() as u64);
        assert_eq!(row.tokens, tokens);
        assert_eq!(row.size_mb, bytes as f64 / (1u64 << 20) as f64);
    }
    assert_eq!(stats.total.documents, docs.len() as u64);
    assert_eq!(stats.total.tokens, stats.rows.iter().map(|r| r.tokens).sum::<u64>());
    let row_mb: f64 = stats.rows.iter().map(|r| r.size_mb).sum();
    assert!((stats.total.size_mb - row_mb).abs() < 1e-12);
}

#[test]
fn csv_round_trips() {
    let stats = compute_stats(random_corpus(200, 12), &TokenCounter::whitespace(), 2);
    let csv = render_report(&stats, ReportFormat::Csv);
    assert_eq!(csv.lines().next().unwrap(), HEADERS.join(","));
    assert_eq!(parse_csv_report(&csv).unwrap(), stats);
}

/// Averages round to the nearest token, as in the published component table.
#[test]
fn published_table_averages() {
    let mb = |m: u64| m << 20;
    let rows = vec![
        ComponentStats::from_counts("Filtered-OpenWebMath", mb(16_999), 2_824_705, 4_826_902_621),
        ComponentStats::from_counts("Filtered-CC-En-math", mb(23_465), 7_597_718, 6_341_745_645),
        ComponentStats::from_counts("Synthetic data", mb(8_855), 2_195_974, 2_193_189_314),
        ComponentStats::from_counts("Code using math packages", mb(6_120), 513_059, 1_703_226_005),
        ComponentStats::from_counts("Mathematical textbooks", mb(4_431), 8_373, 1_390_268_773),
        ComponentStats::from_counts("Translated mathematical code", mb(8_235), 6_347_823, 2_728_740_985),
    ];
    let total = ComponentStats::from_counts("Total", mb(68_105), 19_487_652, 19_184_073_343);
    assert_eq!(rows.iter().map(|r| r.documents).sum::<u64>(), total.documents);
    assert_eq!(rows.iter().map(|r| r.tokens).sum::<u64>(), total.tokens);
    let table = render_report(&CorpusStats { rows, total }, ReportFormat::Table);
    let averages: Vec<&str> = table
        .lines()
        .skip(2)
        .map(|l| l.rsplit(" | ").next().unwrap().trim())
        .collect();
    assert_eq!(averages, ["1,709", "835", "999", "3,320", "166,042", "430", "984"]);
    assert!(table.lines().last().unwrap().contains("68105.00"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stats_are_permutation_invariant(seed in 0u64..1000) {
        let mut docs = random_corpus(60, seed);
        let counter = TokenCounter::whitespace();
        let a = compute_stats(docs.clone(), &counter, 3);
        docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let b = compute_stats(docs, &counter, 1);
        prop_assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().chain([&a.total]).zip(b.rows.iter().chain([&b.total])) {
            prop_assert_eq!(&x.component, &y.component);
            prop_assert_eq!((x.documents, x.tokens), (y.documents, y.tokens));
            prop_assert_eq!(x.size_mb, y.size_mb);
        }
    }
}
