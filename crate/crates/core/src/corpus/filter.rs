use std::cell::Cell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::Document;

/// Input and output document counts for one filtering pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retention {
    pub input: u64,
    pub output: u64,
}

impl Retention {
    pub fn ratio(&self) -> Option<f64> {
        (self.input > 0).then(|| self.output as f64 / self.input as f64)
    }
}

/// Order-preserving subset selection over a document stream. Documents pass
/// through untouched; only membership changes.
pub struct Filtered<I, F> {
    inner: I,
    keep: F,
    counts: Rc<Cell<Retention>>,
}

/// Handle for reading a [`Filtered`] iterator's counts after it has been
/// consumed by another adapter.
#[derive(Debug, Clone)]
pub struct RetentionHandle(Rc<Cell<Retention>>);

impl RetentionHandle {
    pub fn get(&self) -> Retention {
        self.0.get()
    }
}

impl<I, F> Filtered<I, F>
where
    I: Iterator<Item = Document>,
    F: FnMut(&Document) -> bool,
{
    pub fn new(inner: I, keep: F) -> Self {
        Filtered {
            inner,
            keep,
            counts: Rc::new(Cell::new(Retention::default())),
        }
    }

    pub fn retention(&self) -> Retention {
        self.counts.get()
    }

    pub fn handle(&self) -> RetentionHandle {
        RetentionHandle(Rc::clone(&self.counts))
    }
}

impl<I, F> Iterator for Filtered<I, F>
where
    I: Iterator<Item = Document>,
    F: FnMut(&Document) -> bool,
{
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        for doc in self.inner.by_ref() {
            let mut c = self.counts.get();
            c.input += 1;
            let keep = (self.keep)(&doc);
            if keep {
                c.output += 1;
            }
            self.counts.set(c);
            if keep {
                return Some(doc);
            }
        }
        None
    }
}
