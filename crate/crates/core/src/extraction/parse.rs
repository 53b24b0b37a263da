use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ExtractedComputation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Section {
    Conditions = 0,
    Expression = 1,
    Result = 2,
    Code = 3,
}

impl Section {
    const ALL: [Section; 4] = [Section::Conditions, Section::Expression, Section::Result, Section::Code];

    pub(crate) fn header(self) -> &'static str {
        match self {
            Section::Conditions => "Conditions Needed",
            Section::Expression => "Computation Expression",
            Section::Result => "Computation Result",
            Section::Code => "Python Code Snippet",
        }
    }

    fn missing(self) -> &'static str {
        match self {
            Section::Conditions => "missing conditions",
            Section::Expression => "missing expression",
            Section::Result => "missing result",
            Section::Code => "missing code snippet",
        }
    }
}

/// Why a header group did not become a computation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// Header group the reason applies to; `None` for reply-level reasons.
    pub block_index: Option<usize>,
    pub reason: String,
}

impl Reject {
    fn block(index: usize, reason: impl Into<String>) -> Self {
        Reject {
            block_index: Some(index),
            reason: reason.into(),
        }
    }
}

/// Result of parsing one reply.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedReply {
    pub computations: Vec<ExtractedComputation>,
    pub rejects: Vec<Reject>,
    /// Number of header groups seen, valid or not.
    pub groups: usize,
}

const MARKUP: &[char] = &['*', '#', '_', '>', '`', ' ', '\t'];

/// Recognize a section header line, returning the section and any text
/// that follows the colon on the same line.
fn header(line: &str) -> Option<(Section, &str)> {
    let body = line.trim().trim_start_matches(MARKUP);
    for section in Section::ALL {
        let name = section.header();
        let Some(head) = body.get(..name.len()) else { continue };
        if !head.eq_ignore_ascii_case(name) {
            continue;
        }
        let rest = body[name.len()..].trim_start_matches(MARKUP);
        if rest.is_empty() {
            return Some((section, ""));
        }
        if let Some(after) = rest.strip_prefix(':') {
            return Some((section, after.trim_start_matches(MARKUP).trim_end()));
        }
    }
    None
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

#[derive(Default)]
struct Group<'a> {
    sections: Vec<(Section, Vec<&'a str>)>,
    /// The reply ended while a code fence was open inside this group.
    open_fence: bool,
}

impl<'a> Group<'a> {
    fn last(&self) -> Option<Section> {
        self.sections.last().map(|(s, _)| *s)
    }

    fn push_line(&mut self, line: &'a str) {
        if let Some((_, lines)) = self.sections.last_mut() {
            lines.push(line);
        }
    }
}

/// Split a reply into header groups. A group ends when a header repeats or
/// goes backwards in the canonical order. Lines inside code fences are
/// never treated as headers.
fn split_groups(reply: &str) -> Vec<Group<'_>> {
    let mut groups: Vec<Group> = Vec::new();
    let mut in_fence = false;
    for line in reply.lines() {
        if in_fence {
            if let Some(g) = groups.last_mut() {
                g.push_line(line);
            }
            if is_fence(line) {
                in_fence = false;
            }
            continue;
        }
        if let Some((section, inline)) = header(line) {
            let start_new = match groups.last().and_then(Group::last) {
                Some(prev) => section <= prev,
                None => true,
            };
            if start_new {
                groups.push(Group::default());
            }
            let g = groups.last_mut().unwrap();
            g.sections.push((section, Vec::new()));
            if !inline.is_empty() {
                g.push_line(inline);
                in_fence = is_fence(inline);
            }
            continue;
        }
        let Some(g) = groups.last_mut() else { continue };
        if is_fence(line) {
            in_fence = true;
            // a fence right after the result is the code, even without its header
            if g.last() == Some(Section::Result) {
                g.sections.push((Section::Code, Vec::new()));
            }
        }
        g.push_line(line);
    }
    if in_fence {
        if let Some(g) = groups.last_mut() {
            g.open_fence = true;
        }
    }
    groups
}

static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*]\s+)?\d+[.)]\s+(.*)$").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[-*•]\s+(.*)$").unwrap());

fn parse_conditions(lines: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = NUMBERED.captures(line).or_else(|| BULLET.captures(line)) {
            let text = c[1].trim();
            if !text.is_empty() {
                out.push(text.to_string());
            }
        } else if let Some(prev) = out.last_mut() {
            prev.push(' ');
            prev.push_str(line.trim());
        }
    }
    out
}

const DELIMS: [(&str, &str); 4] = [("$$", "$$"), ("\\[", "\\]"), ("$", "$"), ("\\(", "\\)")];

/// Earliest delimited math span in `text`: (start, end, inner).
fn first_math_span(text: &str) -> Option<(usize, usize, &str)> {
    let mut best: Option<(usize, usize, &str)> = None;
    for (open, close) in DELIMS {
        let mut from = 0;
        while let Some(pos) = text[from..].find(open) {
            let start = from + pos;
            let inner_start = start + open.len();
            // `$$` spans take precedence over a `$` at the same offset
            if open == "$" && text[start..].starts_with("$$") {
                from = start + 2;
                continue;
            }
            if let Some(len) = text[inner_start..].find(close) {
                let end = inner_start + len + close.len();
                let inner = &text[inner_start..inner_start + len];
                if !inner.trim().is_empty() && best.is_none_or(|(b, _, _)| start < b) {
                    best = Some((start, end, inner.trim()));
                }
                break;
            }
            break;
        }
    }
    best
}

fn parse_expression(lines: &[&str]) -> String {
    let text = lines.join("\n");
    match first_math_span(&text) {
        Some((_, _, inner)) => inner.to_string(),
        None => text.trim().to_string(),
    }
}

fn parse_result(lines: &[&str]) -> String {
    let text = lines.join("\n");
    let text = text.trim();
    match first_math_span(text) {
        Some((0, end, inner)) if end == text.len() => inner.to_string(),
        _ => text.to_string(),
    }
}

enum Code {
    Body(String),
    Unterminated,
    NoFence,
}

fn parse_code(lines: &[&str]) -> Code {
    let Some(open) = lines.iter().position(|l| is_fence(l)) else {
        return Code::NoFence;
    };
    let body = &lines[open + 1..];
    match body.iter().position(|l| l.trim() == "```") {
        Some(close) => Code::Body(body[..close].join("\n")),
        None => Code::Unterminated,
    }
}

fn build(index: usize, group: &Group<'_>, source_doc_id: &str) -> Result<ExtractedComputation, Reject> {
    let section = |s: Section| {
        group
            .sections
            .iter()
            .find(|(k, _)| *k == s)
            .map(|(_, lines)| lines.as_slice())
            .ok_or_else(|| Reject::block(index, s.missing()))
    };
    let conditions = parse_conditions(section(Section::Conditions)?);
    let expression = parse_expression(section(Section::Expression)?);
    let expected_result = parse_result(section(Section::Result)?);
    let code = match parse_code(section(Section::Code)?) {
        Code::Body(body) => body,
        Code::Unterminated => return Err(Reject::block(index, "unterminated fence")),
        Code::NoFence if group.open_fence => return Err(Reject::block(index, "unterminated fence")),
        Code::NoFence => return Err(Reject::block(index, "missing code fence")),
    };
    if expression.is_empty() {
        return Err(Reject::block(index, "empty expression"));
    }
    if expected_result.is_empty() {
        return Err(Reject::block(index, "empty result"));
    }
    if code.trim().is_empty() {
        return Err(Reject::block(index, "empty code"));
    }
    Ok(ExtractedComputation {
        source_doc_id: source_doc_id.to_string(),
        block_index: index,
        conditions,
        expression,
        expected_result,
        code,
    })
}

/// Parse an extraction reply into computations. Total: never panics and
/// never fails; anything unusable becomes a [`Reject`].
pub fn parse_extraction_output(reply: &str, source_doc_id: &str) -> ParsedReply {
    parse_with(reply, source_doc_id, false)
}

pub(crate) fn parse_with(reply: &str, source_doc_id: &str, drop_last: bool) -> ParsedReply {
    let groups = split_groups(reply);
    let mut parsed = ParsedReply {
        groups: groups.len(),
        ..Default::default()
    };
    if groups.is_empty() {
        parsed.rejects.push(Reject {
            block_index: None,
            reason: "no blocks".into(),
        });
        return parsed;
    }
    let usable = if drop_last { groups.len() - 1 } else { groups.len() };
    for (index, group) in groups.iter().enumerate() {
        if index >= usable {
            parsed.rejects.push(Reject::block(index, "truncated reply"));
            continue;
        }
        match build(index, group, source_doc_id) {
            Ok(c) => parsed.computations.push(c),
            Err(r) => parsed.rejects.push(r),
        }
    }
    parsed
}

/// Render the four fields in the prompt's output layout. `with_code`
/// controls whether the snippet section is included.
pub(crate) fn render_sections(c: &ExtractedComputation, with_code: bool) -> String {
    let mut out = String::new();
    out.push_str("Conditions Needed:\n");
    for (i, cond) in c.conditions.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, cond));
    }
    out.push_str("\nComputation Expression:\n");
    out.push_str(&format!("${}$\n", c.expression));
    out.push_str("\nComputation Result:\n");
    out.push_str(&c.expected_result);
    out.push('\n');
    if with_code {
        out.push_str("\nPython Code Snippet:\n```python\n");
        out.push_str(&c.code);
        out.push_str("\n```\n");
    }
    out
}
