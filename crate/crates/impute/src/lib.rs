//! File formats, experiment orchestration and the `impute` command line on
//! top of `igrm-core`.

pub mod config;
mod error;
pub mod experiment;
pub mod files;
pub mod schema;
pub mod sweep;

pub use config::{Baseline, ExperimentConfig, InitMethod, MechanismName, Method, ModeName};
pub use error::{Error, Result};
pub use experiment::{run_experiment, run_on, Outcome, Report, Summary};
pub use schema::{load_csv, Schema};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "IMPUTE_THREADS";

/// Thread pool sized from `IMPUTE_THREADS`, or rayon's default when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

/// Training allocates and frees many multi-megabyte buffers per epoch. With
/// glibc's defaults each one is a fresh mmap and its pages fault in again, so
/// keep them on the heap instead.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
