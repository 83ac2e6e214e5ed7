//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run sequentially. The `seq` submodule is always available so both paths
//! can be compared in one build.

/// True when the crate was built with rayon support.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Sequential versions of every helper.
pub mod seq {
    pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
    where
        F: Fn(usize) -> U,
    {
        (0..count).map(f).collect()
    }

    pub fn map<T, U, F>(data: &[T], f: F) -> Vec<U>
    where
        F: Fn(&T) -> U,
    {
        data.iter().map(f).collect()
    }
}

#[cfg(feature = "parallel")]
pub mod par {
    use rayon::prelude::*;

    pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        (0..count).into_par_iter().map(f).collect()
    }

    pub fn map<T, U, F>(data: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        data.par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub mod par {
    pub use super::seq::*;
}

/// Maps `f` over `0..count`, in parallel when available. Output order is index
/// order regardless of scheduling.
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    par::map_indexed(count, f)
}

/// Maps `f` over a slice, in parallel when available.
pub fn map<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    par::map(data, f)
}
