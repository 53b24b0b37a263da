#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture(dir: &str, name: &str) -> String {
    let path = fixture_dir(dir).join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const MATH: &[&str] = &[
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

const GENERAL: &[&str] = &[
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

fn text(rng: &mut ChaCha8Rng, topical: &[&str], sentences: usize) -> String {
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

/// Seeded synthetic texts: `n` mathematical and `n` general ones.
pub fn synthetic(n: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let math = (0..n).map(|_| text(&mut rng, MATH, 4)).collect();
    let general = (0..n).map(|_| text(&mut rng, GENERAL, 4)).collect();
    (math, general)
}
