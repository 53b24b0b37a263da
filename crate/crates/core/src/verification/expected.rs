use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// A value the snippet's output is expected to show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Candidate {
    Numeric(f64),
    /// Normalized with [`normalize_symbolic`].
    Symbolic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Numeric,
    Symbolic,
    Substring,
    None,
    Unverifiable,
}

impl MatchKind {
    pub fn is_match(self) -> bool {
        matches!(self, MatchKind::Numeric | MatchKind::Symbolic | MatchKind::Substring)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub kind: MatchKind,
    pub detail: String,
}

/// Numeric comparison tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchPolicy {
    pub rel_tol: f64,
    /// Used instead of the relative bound when the expected value is near zero.
    pub abs_tol: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
        }
    }
}

impl MatchPolicy {
    pub fn close(&self, got: f64, want: f64) -> bool {
        (got - want).abs() <= (self.rel_tol * want.abs()).max(self.abs_tol)
    }
}

const NUM: &str = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)";

static DECIMAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(&format!(r"^{NUM}(?:[eE][+-]?\d+)?$")).unwrap());
static LATEX_SCI: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^({NUM})\s*(?:\*|×|x)?\s*10\s*\^\s*\{{?\s*([+-]?\d+)\s*\}}?$"
    ))
    .unwrap()
});
static SLASH_FRACTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(&format!(r"^({NUM})\s*/\s*({NUM})$")).unwrap());
static TEX_FRACTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^([+-])?\s*\\frac\s*\{{\s*({NUM})\s*\}}\s*\{{\s*({NUM})\s*\}}$"
    ))
    .unwrap()
});
static THOUSANDS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?$").unwrap());
static IN_TEXT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?:\\frac\s*\{{\s*{NUM}\s*\}}\s*\{{\s*{NUM}\s*\}})|(?:{NUM}\s*(?:\*|×)\s*10\s*\^\s*\{{?\s*[+-]?\d+\s*\}}?)|(?:{NUM}(?:[eE][+-]?\d+)?(?:\s*/\s*{NUM})?)"
    ))
    .unwrap()
});

fn num(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parse `s` when it is, in full, one number in a supported notation.
pub fn parse_number_form(s: &str) -> Option<f64> {
    let s = s.trim().trim_end_matches('.').trim();
    if DECIMAL.is_match(s) {
        return num(s);
    }
    if THOUSANDS.is_match(s) {
        return num(&s.replace(',', ""));
    }
    if let Some(c) = LATEX_SCI.captures(s) {
        let exp: i32 = c[2].parse().ok()?;
        return Some(num(&c[1])? * 10f64.powi(exp)).filter(|v| v.is_finite());
    }
    if let Some(c) = SLASH_FRACTION.captures(s) {
        let d = num(&c[2])?;
        return (d != 0.0).then(|| num(&c[1]).map(|n| n / d)).flatten();
    }
    if let Some(c) = TEX_FRACTION.captures(s) {
        let d = num(&c[3])?;
        let sign = if c.get(1).is_some_and(|m| m.as_str() == "-") {
            -1.0
        } else {
            1.0
        };
        return (d != 0.0).then(|| num(&c[2]).map(|n| sign * n / d)).flatten();
    }
    None
}

/// Strip math delimiters and spacing commands, unify multiplication and
/// approximate-equality signs.
fn clean(text: &str) -> String {
    let mut s = text.replace('$', " ");
    for (from, to) in [
        (r"\left", ""),
        (r"\right", ""),
        (r"\dfrac", r"\frac"),
        (r"\tfrac", r"\frac"),
        (r"\times", "*"),
        (r"\cdot", "*"),
        (r"\approx", "="),
        (r"\simeq", "="),
        (r"\,", " "),
        (r"\;", " "),
        (r"\!", ""),
        (r"\quad", " "),
        ("≈", "="),
        ("·", "*"),
        ("−", "-"),
    ] {
        s = s.replace(from, to);
    }
    s
}

/// Canonical form for symbolic comparison: no whitespace or braces, `^`
/// spelled `**`, single `*` (implicit multiplication) dropped.
pub fn normalize_symbolic(text: &str) -> String {
    let compact: String = clean(text)
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '{' && *c != '}')
        .collect();
    let compact = compact.trim_end_matches('.').replace('^', "**");
    let mut out = String::with_capacity(compact.len());
    let chars: Vec<char> = compact.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '*' {
            if chars.get(i + 1) == Some(&'*') {
                out.push_str("**");
                i += 2;
                continue;
            }
            i += 1;
            continue;
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

/// Candidate values from a computation's free-text result.
///
/// With an `=`, every right-hand side is a candidate: numeric when it is a
/// number in full, symbolic otherwise. Without one, the whole text is tried
/// as a number, then numbers appearing in the prose are collected.
pub fn extract_expected_values(expected_result: &str) -> Vec<Candidate> {
    let text = clean(expected_result);
    let mut out: Vec<Candidate> = Vec::new();
    let mut push = |c: Candidate| {
        if !out.contains(&c) {
            out.push(c);
        }
    };
    let parts: Vec<&str> = text.split('=').collect();
    if parts.len() > 1 {
        for seg in &parts[1..] {
            let seg = seg.trim();
            if seg.is_empty() {
                continue;
            }
            match parse_number_form(seg) {
                Some(v) => push(Candidate::Numeric(v)),
                None => {
                    let norm = normalize_symbolic(seg);
                    if !norm.is_empty() {
                        push(Candidate::Symbolic(norm));
                    }
                }
            }
        }
        return out;
    }
    if let Some(v) = parse_number_form(&text) {
        push(Candidate::Numeric(v));
        return out;
    }
    for m in IN_TEXT.find_iter(&text) {
        if let Some(v) = parse_number_form(m.as_str()) {
            push(Candidate::Numeric(v));
        }
    }
    out
}

static STDOUT_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"({NUM}(?:[eE][+-]?\d+)?)(?:\s*/\s*({NUM}))?")).unwrap());

/// Every number printed in `stdout`, including `a/b` fractions (both the
/// quotient and the two parts).
pub fn numbers_in(stdout: &str) -> Vec<f64> {
    let mut out = Vec::new();
    for c in STDOUT_NUMBER.captures_iter(stdout) {
        let Some(a) = num(&c[1]) else { continue };
        out.push(a);
        if let Some(b) = c.get(2).and_then(|m| num(m.as_str())) {
            out.push(b);
            if b != 0.0 {
                out.push(a / b);
            }
        }
    }
    out
}

/// Shortest symbolic candidate eligible for substring matching; shorter
/// ones (a lone variable name) would match almost any output.
const MIN_SUBSTRING_LEN: usize = 3;

pub fn match_output(stdout: &str, candidates: &[Candidate], policy: &MatchPolicy) -> MatchOutcome {
    if candidates.is_empty() {
        return MatchOutcome {
            kind: MatchKind::Unverifiable,
            detail: "no candidate value in expected result".into(),
        };
    }
    let printed = numbers_in(stdout);
    for cand in candidates {
        if let Candidate::Numeric(want) = cand {
            for got in &printed {
                if policy.close(*got, *want) {
                    let rel = if *want == 0.0 {
                        (got - want).abs()
                    } else {
                        ((got - want) / want).abs()
                    };
                    return MatchOutcome {
                        kind: MatchKind::Numeric,
                        detail: format!("got {got:e}, expected {want:e}, relative error {rel:.3e}"),
                    };
                }
            }
        }
    }
    let symbolic: Vec<&str> = candidates
        .iter()
        .filter_map(|c| match c {
            Candidate::Symbolic(s) => Some(s.as_str()),
            Candidate::Numeric(_) => None,
        })
        .collect();
    for line in stdout.lines() {
        let norm = normalize_symbolic(line);
        let rhs = norm.rsplit('=').next().unwrap_or("");
        for cand in &symbolic {
            if norm == *cand || rhs == *cand {
                return MatchOutcome {
                    kind: MatchKind::Symbolic,
                    detail: format!("line {line:?} equals {cand:?}"),
                };
            }
        }
    }
    let whole = normalize_symbolic(stdout);
    for cand in &symbolic {
        if cand.chars().count() >= MIN_SUBSTRING_LEN && whole.contains(cand) {
            return MatchOutcome {
                kind: MatchKind::Substring,
                detail: format!("output contains {cand:?}"),
            };
        }
    }
    MatchOutcome {
        kind: MatchKind::None,
        detail: format!("no match among {} candidate(s)", candidates.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric(text: &str) -> Vec<f64> {
        extract_expected_values(text)
            .into_iter()
            .filter_map(|c| match c {
                Candidate::Numeric(v) => Some(v),
                Candidate::Symbolic(_) => None,
            })
            .collect()
    }

    #[test]
    fn number_forms() {
        assert_eq!(parse_number_form("42"), Some(42.0));
        assert_eq!(parse_number_form("-0.5"), Some(-0.5));
        assert_eq!(parse_number_form("1.5e3"), Some(1500.0));
        assert_eq!(parse_number_form("2,598,960"), Some(2_598_960.0));
        assert_eq!(parse_number_form("3/4"), Some(0.75));
        assert_eq!(parse_number_form(r"\frac{1}{8}"), Some(0.125));
        assert_eq!(parse_number_form(r"-\frac{1}{8}"), Some(-0.125));
        assert_eq!(parse_number_form("1/0"), None);
        assert_eq!(parse_number_form("2x"), None);
        let v = parse_number_form("5.540678 * 10^{-5}").unwrap();
        assert!((v - 5.540678e-5).abs() < 1e-18);
    }

    #[test]
    fn latex_scientific_result() {
        let v = numeric("5.540678 * 10^{-5}");
        assert_eq!(v.len(), 1);
        assert!((v[0] - 5.540678e-5).abs() < 1e-18);
        assert_eq!(numeric(r"$5.540678 \times 10^{-5}$").len(), 1);
    }

    #[test]
    fn symbolic_right_hand_side() {
        assert_eq!(
            extract_expected_values("h'(x) = 2x - 2"),
            vec![Candidate::Symbolic("2x-2".into())]
        );
        assert_eq!(
            extract_expected_values(r"\frac{d}{dx}(x^2) = 2 \cdot x^{1}"),
            vec![Candidate::Symbolic("2x**1".into())]
        );
    }

    #[test]
    fn chained_equalities_give_every_value() {
        assert_eq!(
            numeric(r"P = \frac{3}{54145} \approx 0.0000554"),
            vec![3.0 / 54145.0, 0.0000554]
        );
    }

    #[test]
    fn prose_without_values_is_empty() {
        assert!(extract_expected_values(
            "The probability of exactly x successes in n independent trials, each with a probability of success p."
        )
        .is_empty());
        assert_eq!(numeric("The answer is 12 apples."), vec![12.0]);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_symbolic("2*x - 2"), "2x-2");
        assert_eq!(normalize_symbolic("x^{2} + 1"), "x**2+1");
        assert_eq!(normalize_symbolic("x**2 + 1"), "x**2+1");
    }

    #[test]
    fn stdout_numbers() {
        assert_eq!(numbers_in("a = 3/4, b=-2e-3"), vec![3.0, 4.0, 0.75, -2e-3]);
    }

    #[test]
    fn match_kinds() {
        let p = MatchPolicy::default();
        let sci = vec![Candidate::Numeric(5.540678e-5)];
        assert_eq!(
            match_output("5.540678058298049e-05\n", &sci, &p).kind,
            MatchKind::Numeric
        );
        assert_eq!(
            match_output("0.24609375", &[Candidate::Numeric(0.25)], &p).kind,
            MatchKind::None
        );
        let sym = vec![Candidate::Symbolic("2x-2".into())];
        assert_eq!(match_output("2*x - 2\n", &sym, &p).kind, MatchKind::Symbolic);
        assert_eq!(match_output("h'(x) = 2*x - 2", &sym, &p).kind, MatchKind::Symbolic);
        assert_eq!(
            match_output("derivative: 2*x - 2 (simplified)", &sym, &p).kind,
            MatchKind::Substring
        );
        assert_eq!(
            match_output("x", &[Candidate::Symbolic("x".into())], &p).kind,
            MatchKind::Symbolic
        );
        assert_eq!(
            match_output("xyz", &[Candidate::Symbolic("y".into())], &p).kind,
            MatchKind::None
        );
        assert_eq!(match_output("1", &[], &p).kind, MatchKind::Unverifiable);
    }

    #[test]
    fn tolerance_near_zero_is_absolute() {
        let p = MatchPolicy::default();
        assert!(p.close(1e-10, 0.0));
        assert!(!p.close(1e-8, 0.0));
        assert!(p.close(1.0000005, 1.0));
        assert!(!p.close(1.00001, 1.0));
    }
}
