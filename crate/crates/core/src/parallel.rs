//! Per-point work distribution.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Runs independent per-point jobs, optionally on a bounded thread pool.
/// Output order always follows the input indices.
#[derive(Debug)]
pub struct Executor {
    mode: Mode,
}

#[derive(Debug)]
enum Mode {
    Sequential,
    Global,
    Pool(ThreadPool),
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            mode: Mode::Sequential,
        }
    }

    /// Rayon's global pool.
    pub fn global() -> Self {
        Executor { mode: Mode::Global }
    }

    /// At most `threads` workers; `0` means sequential.
    pub fn with_threads(threads: usize) -> Self {
        if threads == 0 {
            return Self::sequential();
        }
        match ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => Executor {
                mode: Mode::Pool(pool),
            },
            Err(err) => {
                log::warn!("falling back to sequential execution: {err}");
                Self::sequential()
            }
        }
    }

    pub fn is_sequential(&self) -> bool {
        matches!(self.mode, Mode::Sequential)
    }

    pub fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match &self.mode {
            Mode::Sequential => (0..n).map(f).collect(),
            Mode::Global => (0..n).into_par_iter().map(f).collect(),
            Mode::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::global()
    }
}
