//! Thread-pool executor for the core sample loops.

use rayon::prelude::*;
use wildsim_core::exec::Executor;

use crate::error::CliError;

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "WILDSIM_THREADS";

pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads = None` uses `WILDSIM_THREADS`, then the machine's parallelism.
    pub fn new(threads: Option<usize>) -> Result<Self, CliError> {
        let threads = match threads {
            Some(n) => n,
            None => match std::env::var(THREADS_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| {
                    CliError::Usage(format!("{THREADS_ENV}={v} is not a thread count; set it to a positive integer"))
                })?,
                Err(_) => 0,
            },
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
        Ok(RayonExecutor { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map_indexed<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wildsim_core::exec::Sequential;
    use wildsim_core::kernels::Kernel;
    use wildsim_core::wildsum::{draw_mu_t, Base, WildSum};

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = WildSum::new(Kernel::Sum { m: 3 }, Base::Normal { mean: 0.0, sd: 1.0 }).unwrap();
        let seq = draw_mu_t(&cfg, 1.0, 2000, 5, &Sequential).unwrap();
        for threads in [1, 3] {
            let par = draw_mu_t(&cfg, 1.0, 2000, 5, &RayonExecutor::new(Some(threads)).unwrap()).unwrap();
            assert_eq!(seq, par);
        }
    }
}
