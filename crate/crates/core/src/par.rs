//! Bounded, order-preserving parallel map over a stream.

use rayon::prelude::*;

/// Items pulled from the input per parallel batch.
pub const DEFAULT_CHUNK: usize = 256;

/// Applies `f` to every item of `input` on a pool of `workers` threads,
/// yielding results in input order. At most `chunk` items are held in
/// memory at once, so arbitrarily long streams run in bounded space.
pub struct OrderedMap<I: Iterator, F, R> {
    input: I,
    f: F,
    pool: rayon::ThreadPool,
    chunk: usize,
    ready: std::vec::IntoIter<R>,
}

impl<I, F, R> OrderedMap<I, F, R>
where
    I: Iterator,
    I::Item: Send,
    F: Fn(I::Item) -> R + Sync,
    R: Send,
{
    pub fn new(input: I, workers: usize, chunk: usize, f: F) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        OrderedMap {
            input,
            f,
            pool,
            chunk: chunk.max(1),
            ready: Vec::new().into_iter(),
        }
    }
}

impl<I, F, R> Iterator for OrderedMap<I, F, R>
where
    I: Iterator,
    I::Item: Send,
    F: Fn(I::Item) -> R + Sync,
    R: Send,
{
    type Item = R;

    fn next(&mut self) -> Option<R> {
        if let Some(r) = self.ready.next() {
            return Some(r);
        }
        let batch: Vec<I::Item> = self.input.by_ref().take(self.chunk).collect();
        if batch.is_empty() {
            return None;
        }
        let f = &self.f;
        let out: Vec<R> = self.pool.install(|| batch.into_par_iter().map(f).collect());
        self.ready = out.into_iter();
        self.ready.next()
    }
}

/// Default worker count: the number of available CPUs.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
