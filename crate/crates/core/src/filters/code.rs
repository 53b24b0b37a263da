use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::corpus::Document;

/// Packages whose import marks a file as mathematical code. numpy is left
/// out on purpose: it is imported by most numeric code regardless of topic.
pub const MATH_PACKAGES: [&str; 5] = ["sympy", "fractions", "cmath", "scipy", "statistics"];

static IMPORT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^import\s+(.+)$").unwrap());
static FROM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^from\s+([A-Za-z_][\w.]*)\s+import\b").unwrap());

/// Top-level package names imported by one logical statement.
fn imported(statement: &str) -> Vec<&str> {
    let statement = statement.trim();
    if let Some(c) = FROM.captures(statement) {
        return vec![c.get(1).unwrap().as_str().split('.').next().unwrap()];
    }
    if let Some(c) = IMPORT.captures(statement) {
        return c
            .get(1)
            .unwrap()
            .as_str()
            .split(',')
            .filter_map(|item| item.split_whitespace().next())
            .filter_map(|module| module.split('.').next())
            .collect();
    }
    Vec::new()
}

/// Remove a trailing `#` comment, ignoring `#` inside simple string literals.
fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if ch == '\\' {
                    escaped = true;
                } else if ch == q {
                    quote = None;
                }
            }
            None => match ch {
                '#' => return &line[..i],
                '"' | '\'' => quote = Some(ch),
                _ => {}
            },
        }
    }
    line
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportFilter {
    packages: BTreeSet<String>,
}

impl Default for ImportFilter {
    fn default() -> Self {
        Self::new(MATH_PACKAGES)
    }
}

impl ImportFilter {
    pub fn new<I, S>(packages: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ImportFilter {
            packages: packages.into_iter().map(Into::into).collect(),
        }
    }

    pub fn packages(&self) -> &BTreeSet<String> {
        &self.packages
    }

    /// True iff some non-comment line imports a configured package.
    /// Lines inside triple-quoted strings are skipped.
    pub fn matches(&self, source: &str) -> bool {
        let mut in_docstring: Option<&str> = None;
        for raw in source.lines() {
            let line = raw.trim();
            if let Some(delim) = in_docstring {
                if line.contains(delim) {
                    in_docstring = None;
                }
                continue;
            }
            if let Some(delim) = ["\"\"\"", "'''"].into_iter().find(|d| line.starts_with(d)) {
                // an opening delimiter with no closing one on the same line
                if line[3..].find(delim).is_none() {
                    in_docstring = Some(delim);
                }
                continue;
            }
            for statement in strip_comment(line).split(';') {
                if imported(statement).iter().any(|p| self.packages.contains(*p)) {
                    return true;
                }
            }
        }
        false
    }
}

/// [`ImportFilter::matches`] with the default package set.
pub fn filter_code_by_imports(doc: &Document) -> bool {
    static DEFAULT: LazyLock<ImportFilter> = LazyLock::new(ImportFilter::default);
    DEFAULT.matches(&doc.text)
}
