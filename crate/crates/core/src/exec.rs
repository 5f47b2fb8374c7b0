//! Execution layer for the data-parallel inner loops (quadrature nodes,
//! verification grids, Duhamel panels).
//!
//! With the `parallel` feature (default) work is spread over rayon's pool.
//! Without it, or inside [`with_mode`]`(Mode::Sequential, ..)`, everything
//! runs on the calling thread. Results are always collected in index order,
//! so reductions over them are independent of the schedule.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

thread_local! {
    static MODE: Cell<Mode> = const { Cell::new(Mode::Parallel) };
}

/// Runs `f` with the given execution mode on the current thread.
pub fn with_mode<R>(mode: Mode, f: impl FnOnce() -> R) -> R {
    let prev = MODE.with(|m| m.replace(mode));
    let out = f();
    MODE.with(|m| m.set(prev));
    out
}

pub fn current_mode() -> Mode {
    MODE.with(|m| m.get())
}

/// True when the parallel backend is compiled in.
pub const fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if current_mode() == Mode::Parallel && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, returning results in slice order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}

/// Like [`map_indexed`] for fallible work; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}

/// Fallible [`map_slice`].
pub fn try_map_slice<S, T, E, F>(items: &[S], f: F) -> Result<Vec<T>, E>
where
    S: Sync,
    T: Send,
    E: Send,
    F: Fn(&S) -> Result<T, E> + Sync + Send,
{
    try_map_indexed(items.len(), |i| f(&items[i]))
}

/// Configures the global rayon pool size. Returns false if the pool was
/// already initialised or the backend is not compiled in.
pub fn init_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Max-reduction that ignores schedule order.
pub fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0_f64, |acc, v| if v > acc || v.is_nan() { v } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt();
        let a = with_mode(Mode::Sequential, || map_indexed(1000, f));
        let b = with_mode(Mode::Parallel, || map_indexed(1000, f));
        assert_eq!(a, b);
        assert_eq!(current_mode(), Mode::Parallel);
    }

    #[test]
    fn first_error_in_index_order() {
        let r: Result<Vec<usize>, usize> =
            try_map_indexed(100, |i| if i % 7 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }

    #[test]
    fn max_propagates_nan() {
        assert!(max_of([1.0, f64::NAN, 2.0]).is_nan());
        assert_eq!(max_of([1.0, 3.0, 2.0]), 3.0);
    }
}
