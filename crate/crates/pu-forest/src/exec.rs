//! Execution-mode switch for the data-parallel inner loops.
//!
//! All parallel work in this crate is an order-preserving map over an
//! indexed task list, so results are bitwise identical for any thread count
//! and for both modes. With the `parallel` feature disabled,
//! [`ExecMode::Parallel`] falls back to the sequential path.

/// How to run embarrassingly parallel stages (forest training, scoring,
/// density-grid evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

pub(crate) fn map_range<O, F>(mode: ExecMode, n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

pub(crate) fn map_slice<'a, I, O, F>(mode: ExecMode, items: &'a [I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&'a I) -> O + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().map(f).collect()
            }
        }
    }
}
