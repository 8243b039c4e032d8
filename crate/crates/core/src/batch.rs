//! Batch-level fan-out. One solver run is sequential; independent runs are
//! mapped over a rayon pool when the `parallel` feature is on. The
//! `KSERVER_MATCH_THREADS` environment variable caps the pool size.

pub const THREADS_ENV: &str = "KSERVER_MATCH_THREADS";

#[cfg(feature = "parallel")]
fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse().ok().filter(|&n: &usize| n > 0)
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Worker count a batch would use.
pub fn threads() -> usize {
    if !parallel_enabled() {
        return 1;
    }
    #[cfg(feature = "parallel")]
    {
        thread_cap().unwrap_or_else(rayon::current_num_threads)
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Order-preserving map; parallel with the feature, sequential otherwise.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match thread_cap() {
            Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(_) => items.iter().map(f).collect(),
            },
            None => items.par_iter().map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn map_sequential<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}
