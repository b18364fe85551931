//! Index-ordered parallel map.
//!
//! With the `parallel` feature the work runs on a rayon pool sized by
//! [`Workers`]; without it, or with one thread, it runs sequentially. Results
//! are always returned in index order, so reductions over them do not depend
//! on the thread count.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Workers {
    /// 0 selects the number of available cores.
    pub threads: usize,
}

impl Workers {
    pub fn new(threads: usize) -> Self {
        Self { threads }
    }

    pub fn sequential() -> Self {
        Self { threads: 1 }
    }

    pub fn effective_threads(&self) -> usize {
        if self.threads > 0 {
            return self.threads;
        }
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    }

    /// Evaluates `f(0..len)` and returns the results in index order.
    pub fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            if self.threads != 1 {
                use rayon::prelude::*;
                let run = || (0..len).into_par_iter().map(&f).collect::<Vec<T>>();
                if self.threads == 0 {
                    return run();
                }
                match rayon::ThreadPoolBuilder::new()
                    .num_threads(self.threads)
                    .build()
                {
                    Ok(pool) => return pool.install(run),
                    Err(e) => log::warn!("thread pool unavailable ({e}); running sequentially"),
                }
            }
        }
        (0..len).map(f).collect()
    }
}
