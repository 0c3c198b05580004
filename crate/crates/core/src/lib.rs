//! Hybrid minimum-seeking control under unknown control directions.
//!
//! The crate provides a solver for hybrid dynamical systems, manifold
//! geometry, synergistic potential families, the switching-gain automaton,
//! the oscillatory minimum-seeking feedback law and the five closed-loop
//! scenarios built from them.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod controller;
pub mod geometry;
pub mod hybrid;
pub mod scenario;
pub mod synergistic;
pub mod uncertainty;

/// Map over a slice, in parallel when the `parallel` feature is on.
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
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
