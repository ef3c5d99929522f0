//! Order-preserving parallel map and the parallel program executor.

use rayon::prelude::*;

use fastslow_core::{execute, Backend, Clock, ExecContext, ExecutionResult, Program, Registry};

/// Maps `f` over `items` on at most `parallelism` threads; output order is
/// input order whatever the completion order. `parallelism <= 1` runs inline.
pub fn par_map<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if parallelism <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        // no threads to be had: still correct, just sequential
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Runs every program against the same context. Each run owns its
/// environment, so the result list equals `programs.map(execute)` for any
/// `parallelism`.
pub fn execute_many(
    programs: &[Program],
    registry: &Registry,
    backend: &dyn Backend,
    ctx: &ExecContext,
    clock: &dyn Clock,
    parallelism: usize,
) -> Vec<ExecutionResult> {
    par_map(programs, parallelism.max(1), |p| execute(p, registry, backend, ctx, clock))
}
