//! Deterministic parallel map over index ranges.
//!
//! Work is distributed by rayon but results are always collected in index order and
//! any reduction happens sequentially afterwards, so outputs do not depend on the
//! number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Handle to a worker pool of fixed size.
pub struct Workers {
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers").field("threads", &self.pool.current_num_threads()).finish()
    }
}

impl Workers {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().expect("thread pool");
        Workers { pool }
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0), ..., f(n-1)` in index order.
    pub fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    /// Run a closure inside the pool so nested rayon calls use it.
    pub fn install<R: Send, F: FnOnce() -> R + Send>(&self, f: F) -> R {
        self.pool.install(f)
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::new(1)
    }
}

/// `f(0), ..., f(n-1)` in index order on the ambient rayon pool.
pub fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Independent generator for trial `index` under `master`.
pub fn trial_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn results_independent_of_thread_count() {
        let f = |i: usize| {
            let mut r = trial_rng(42, i as u64);
            r.gen::<f64>() + i as f64
        };
        let a = Workers::new(1).map(1000, f);
        let b = Workers::new(4).map(1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = trial_rng(1, 0).gen();
        let b: u64 = trial_rng(1, 1).gen();
        assert_ne!(a, b);
    }
}
