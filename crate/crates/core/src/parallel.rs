//! Fixed-size worker pools. Work is always split by index and gathered in
//! index order, so results never depend on the worker count.

use rayon::prelude::*;

/// Maps `f` over `0..count` on `workers` threads, returning results in
/// index order. `workers = 0` means the rayon default.
pub fn map_indexed<T, F>(workers: usize, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers == 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..count).into_par_iter().map(&f).collect()),
        Err(_) => (0..count).map(f).collect(),
    }
}
