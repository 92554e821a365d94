//! Row-partitioned execution. With the `parallel` feature rows are spread over
//! the rayon pool; otherwise everything runs on the calling thread. Each row is
//! computed by the same closure either way, so results do not depend on the
//! execution mode or thread count.

/// How per-pixel kernels are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Fill `out` row by row; `row(y, slice)` writes one row of `width` items.
pub(crate) fn for_each_row<T, F>(exec: Execution, out: &mut [T], width: usize, row: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    match exec {
        Execution::Sequential => out
            .chunks_mut(width)
            .enumerate()
            .for_each(|(y, r)| row(y, r)),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, r)| row(y, r))
        }
    }
}

/// Map `f` over `items` preserving order.
pub(crate) fn map_ordered<I, O, F>(exec: Execution, items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(usize, &I) -> O + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
        }
    }
}
