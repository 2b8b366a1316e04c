//! Batch execution helper: rayon data-parallel when the `parallel` feature
//! is on and more than one worker is requested, plain sequential otherwise.
//! Output order always matches input order.

/// Number of workers a request actually gets under the current build.
pub fn effective_workers(requested: usize) -> usize {
    let requested = requested.max(1);
    if cfg!(feature = "parallel") {
        requested
    } else {
        1
    }
}

/// Pools are cached per worker count: batch calls repeat (eval records,
/// sweep cells, claim batches) and rebuilding threads each time costs more
/// than the work at desk scale.
#[cfg(feature = "parallel")]
fn pool_for(workers: usize) -> Option<std::sync::Arc<rayon::ThreadPool>> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .expect("pool cache lock");
    if let Some(pool) = pools.get(&workers) {
        return Some(Arc::clone(pool));
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => {
            let pool = Arc::new(pool);
            pools.insert(workers, Arc::clone(&pool));
            Some(pool)
        }
        Err(e) => {
            tracing::warn!(error = %e, "thread pool construction failed, running sequentially");
            None
        }
    }
}

#[cfg(feature = "parallel")]
pub fn run_batch<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    use rayon::prelude::*;
    if workers <= 1 {
        return items.into_iter().map(f).collect();
    }
    match pool_for(workers) {
        Some(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
        None => items.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch<T, R, F>(items: Vec<T>, _workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_input_order() {
        let items: Vec<u64> = (0..256).collect();
        let sequential = run_batch(items.clone(), 1, |x| x * 3);
        let parallel = run_batch(items, 8, |x| x * 3);
        assert_eq!(sequential, parallel);
        assert_eq!(parallel[100], 300);
    }
}
