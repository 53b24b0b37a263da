use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::{CorpusError, Document, Source};

/// Streaming reader over a line-delimited corpus file.
///
/// Each line is a JSON object carrying at least a text field. Lines that
/// fail to parse, lack text, or carry empty text are skipped and counted.
/// String-valued top-level fields other than the record fields are folded
/// into `meta`, so raw dumps (`{"url": ..., "text": ...}`) can be ingested
/// directly.
pub struct CorpusReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    default_source: Source,
    text_field: String,
    line_no: usize,
    skipped: usize,
}

impl CorpusReader {
    pub fn open(path: impl AsRef<Path>, default_source: Source) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(CorpusReader {
            path: path.to_path_buf(),
            lines: BufReader::new(file).lines(),
            default_source,
            text_field: "text".to_string(),
            line_no: 0,
            skipped: 0,
        })
    }

    /// Read the document body from a different field (e.g. `content`).
    pub fn with_text_field(mut self, field: impl Into<String>) -> Self {
        self.text_field = field.into();
        self
    }

    /// Number of malformed lines skipped so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn parse_line(&self, line: &str) -> Result<Document, String> {
        let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
        let Value::Object(mut obj) = value else {
            return Err("record is not an object".to_string());
        };
        let text = match obj.remove(&self.text_field) {
            Some(Value::String(s)) => s,
            Some(_) => return Err(format!("field {:?} is not a string", self.text_field)),
            None => return Err(format!("missing field {:?}", self.text_field)),
        };
        let source = match obj.remove("source") {
            Some(Value::String(s)) => s.parse::<Source>().map_err(|e| e.to_string())?,
            Some(Value::Null) | None => self.default_source,
            Some(_) => return Err("source is not a string".to_string()),
        };
        let mut meta = BTreeMap::new();
        match obj.remove("meta") {
            Some(Value::Object(m)) => {
                for (k, v) in m {
                    match v {
                        Value::String(s) => {
                            meta.insert(k, s);
                        }
                        other => {
                            meta.insert(k, other.to_string());
                        }
                    }
                }
            }
            Some(Value::Null) | None => {}
            Some(_) => return Err("meta is not an object".to_string()),
        }
        let token_count = match obj.remove("token_count") {
            Some(Value::Number(n)) => Some(
                n.as_u64()
                    .ok_or_else(|| "token_count is not a non-negative integer".to_string())?,
            ),
            Some(Value::Null) | None => None,
            Some(_) => return Err("token_count is not a number".to_string()),
        };
        obj.remove("id");
        for (k, v) in obj {
            if let Value::String(s) = v {
                meta.entry(k).or_insert(s);
            }
        }

        let mut doc = Document::new(source, text).map_err(|e| e.to_string())?;
        doc.meta = meta;
        doc.token_count = token_count;
        Ok(doc)
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(CorpusError::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse_line(&line) {
                Ok(doc) => return Some(Ok(doc)),
                Err(reason) => {
                    self.skipped += 1;
                    log::warn!("{}:{}: skipping record: {}", self.path.display(), self.line_no, reason);
                }
            }
        }
    }
}

pub fn read_corpus(path: impl AsRef<Path>, source: Source) -> Result<CorpusReader, CorpusError> {
    CorpusReader::open(path, source)
}

/// Writes records to a temporary sibling file and renames it into place on
/// [`finish`](CorpusWriter::finish). A writer dropped before `finish`
/// removes its temporary file, so a failed write never leaves a partial
/// corpus under the destination name.
pub struct CorpusWriter {
    dest: PathBuf,
    tmp: Option<tempfile::NamedTempFile>,
    out: Option<BufWriter<File>>,
    count: usize,
}

impl CorpusWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dest = path.as_ref().to_path_buf();
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let tmp = tempfile::Builder::new()
            .prefix(".partial-")
            .tempfile_in(&dir)
            .map_err(|e| CorpusError::io(&dest, e))?;
        let file = tmp.reopen().map_err(|e| CorpusError::io(&dest, e))?;
        Ok(CorpusWriter {
            dest,
            tmp: Some(tmp),
            out: Some(BufWriter::new(file)),
            count: 0,
        })
    }

    pub fn write(&mut self, doc: &Document) -> Result<(), CorpusError> {
        self.write_record(doc)
    }

    /// Append any serializable record as one line.
    pub fn write_record<T: Serialize + ?Sized>(&mut self, record: &T) -> Result<(), CorpusError> {
        let out = self.out.as_mut().expect("writer already finished");
        serde_json::to_writer(&mut *out, record).map_err(|e| CorpusError::io(&self.dest, e.into()))?;
        out.write_all(b"\n").map_err(|e| CorpusError::io(&self.dest, e))?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(mut self) -> Result<usize, CorpusError> {
        let mut out = self.out.take().expect("writer already finished");
        out.flush().map_err(|e| CorpusError::io(&self.dest, e))?;
        out.get_ref().sync_all().map_err(|e| CorpusError::io(&self.dest, e))?;
        drop(out);
        let tmp = self.tmp.take().expect("writer already finished");
        tmp.persist(&self.dest)
            .map_err(|e| CorpusError::io(&self.dest, e.error))?;
        Ok(self.count)
    }
}

/// Write every document to `path`, returning the record count.
pub fn write_corpus<I>(docs: I, path: impl AsRef<Path>) -> Result<usize, CorpusError>
where
    I: IntoIterator<Item = Document>,
{
    let mut writer = CorpusWriter::create(path)?;
    for doc in docs {
        writer.write(&doc)?;
    }
    writer.finish()
}

/// Strict line-delimited reader for pipeline artifacts: blank lines are
/// skipped, any malformed line is an error.
pub fn read_records<T: DeserializeOwned>(
    path: impl AsRef<Path>,
) -> Result<impl Iterator<Item = Result<T, CorpusError>>, CorpusError> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(CorpusError::io(&path, e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(serde_json::from_str(&l).map_err(|e| {
                CorpusError::io(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)),
                )
            })),
        }))
}
