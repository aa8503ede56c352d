use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SSLSE_THREADS";

/// Worker count from `SSLSE_THREADS`, or rayon's default when unset or invalid.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Run `f` inside a pool sized by [`worker_count`].
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let pool: ThreadPool = ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .expect("thread pool");
    pool.install(f)
}
