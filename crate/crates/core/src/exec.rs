//! Work distribution for data-parallel loops.
//!
//! Every parallel loop in the crate goes through [`Executor::map`], which
//! returns results in input order. With the `parallel` feature disabled only
//! the sequential executor exists and `rayon` is not linked.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    /// Rayon-backed. `threads == 0` means "use the ambient pool".
    #[cfg(feature = "parallel")]
    Parallel { threads: usize },
}

impl Default for Executor {
    fn default() -> Self {
        Executor::with_parallelism(0)
    }
}

impl Executor {
    /// `1` gives the sequential executor. `0` uses the ambient rayon pool and
    /// any other value a dedicated pool of that size. Without the `parallel`
    /// feature every value maps to sequential.
    pub fn with_parallelism(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            if threads == 1 {
                Executor::Sequential
            } else {
                Executor::Parallel { threads }
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Executor::Sequential
        }
    }

    pub fn is_parallel(&self) -> bool {
        !matches!(self, Executor::Sequential)
    }

    /// Order-preserving map over `items`. `f` receives the item index.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match *self {
            Executor::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel { threads } => {
                use rayon::prelude::*;
                let run = || {
                    items
                        .par_iter()
                        .enumerate()
                        .map(|(i, t)| f(i, t))
                        .collect::<Vec<R>>()
                };
                if threads == 0 || rayon::current_thread_index().is_some() {
                    run()
                } else {
                    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                        Ok(pool) => pool.install(run),
                        Err(_) => run(),
                    }
                }
            }
        }
    }

    /// Runs `f` for every index in `0..n`, collecting results in index order.
    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let idx: Vec<usize> = (0..n).collect();
        self.map(&idx, |_, &i| f(i))
    }
}
