//! Execution strategy for data-parallel inner loops.
//!
//! Every hot map (spectral grid evaluation, per-tooth rate integrals, Monte Carlo
//! time slices) funnels through [`map_indexed`], so the `parallel` feature swaps
//! rayon in and out at a single choke point. [`map_indexed_seq`] is the
//! always-sequential twin used by the benchmark suite to compare both paths within
//! one build. Outputs are index-ordered in either mode, so results do not depend
//! on the execution strategy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over `0..n`, sequentially regardless of enabled features.
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]: stops at the first error.
pub fn try_map_indexed<U, E, F>(n: usize, f: F) -> Result<Vec<U>, E>
where
    U: Send,
    E: Send,
    F: Fn(usize) -> Result<U, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
