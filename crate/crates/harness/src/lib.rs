//! Experiment orchestration, audit suite, and report I/O for the `dpnormopt`
//! command line tool.

pub mod audit_suite;
pub mod config;
pub mod experiment;
pub mod report;

/// Resolves the worker count: explicit value, then `DPNORMOPT_THREADS`, then
/// rayon's default.
pub fn thread_pool(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads.filter(|t| *t > 0) {
        b = b.num_threads(t);
    }
    Ok(b.build()?)
}
