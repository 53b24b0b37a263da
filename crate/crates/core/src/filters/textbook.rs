use crate::corpus::Document;

pub const DEFAULT_KEYWORDS: [&str; 11] = [
    "algebra",
    "geometry",
    "probability",
    "calculus",
    "trigonometry",
    "statistics",
    "arithmetic",
    "number theory",
    "linear algebra",
    "topology",
    "combinatorics",
];

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True iff some keyword occurs in `title` as whole words, ignoring case.
/// Multi-word keywords must appear as a contiguous word sequence.
pub fn filter_textbook_by_title<S: AsRef<str>>(title: &str, keywords: &[S]) -> bool {
    let title = words(title);
    keywords.iter().any(|k| {
        let k = words(k.as_ref());
        !k.is_empty() && title.windows(k.len()).any(|w| w == k.as_slice())
    })
}

/// Title of a textbook document: the `title` meta field, else the file name
/// without extension, else the first non-empty line of the text.
pub fn textbook_title(doc: &Document) -> String {
    if let Some(t) = doc.meta.get("title") {
        return t.clone();
    }
    if let Some(path) = doc.meta.get("path").or_else(|| doc.meta.get("file_name")) {
        let stem = std::path::Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().replace(['_', '-'], " "));
        if let Some(stem) = stem {
            return stem;
        }
    }
    doc.text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .trim_start_matches('#')
        .trim()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;

    fn default(title: &str) -> bool {
        filter_textbook_by_title(title, &DEFAULT_KEYWORDS)
    }

    #[test]
    fn keyword_titles() {
        assert!(default("Introduction to Algebra"));
        assert!(!default("A History of Rome"));
        assert!(default("PROBABILITY and Measure"));
        assert!(default("Elementary Number Theory"));
        assert!(default("Calculus: Early Transcendentals"));
    }

    #[test]
    fn whole_words_only() {
        assert!(!default("Algebraic Structures in Poetry"));
        assert!(!default("Number of Theories"));
        assert!(!filter_textbook_by_title("Algebra", &[""]));
    }

    #[test]
    fn title_sources() {
        let d = Document::new(Source::Textbook, "# Linear Algebra Done Right\n\nChapter 1").unwrap();
        assert_eq!(textbook_title(&d), "Linear Algebra Done Right");
        let d = d.with_meta("path", "books/intro_to_topology.md");
        assert_eq!(textbook_title(&d), "intro to topology");
        let d = d.with_meta("title", "Given Title");
        assert_eq!(textbook_title(&d), "Given Title");
    }
}
