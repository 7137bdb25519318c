use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use spinglass_core::Executor;

/// Worker pool for independent disorder samples. Results come back in index
/// order, so output does not depend on the worker count.
pub struct PoolExecutor {
    pool: ThreadPool,
}

impl PoolExecutor {
    pub fn new(workers: usize) -> Self {
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        Self { pool }
    }
}

impl Executor for PoolExecutor {
    fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        self.pool
            .install(|| (0..n).into_par_iter().map(&f).collect())
    }
}
