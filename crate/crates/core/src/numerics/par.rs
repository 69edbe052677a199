//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] fans work out
//! over the rayon pool; without it every strategy runs on the calling
//! thread. Results always come back in input order, so callers that reduce
//! them in that order get bit-identical sums regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Name of the environment variable capping worker threads (0 = auto).
pub const THREADS_ENV: &str = "TILEPATH_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Ordered map over `items`.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Ordered map over `0..n`.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

/// Configures the global rayon pool from `TILEPATH_THREADS`.
///
/// Returns the thread count that was requested (0 = auto). Calling it more
/// than once is harmless; only the first configuration takes effect.
pub fn init_threads_from_env() -> usize {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build_global();
    }
    requested
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_in_order() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x * x + 1;
        assert_eq!(
            Exec::Sequential.map(&items, f),
            Exec::Parallel.map(&items, f)
        );
        assert_eq!(
            Exec::Sequential.map_range(17, |i| i * 3),
            Exec::Parallel.map_range(17, |i| i * 3)
        );
    }
}
