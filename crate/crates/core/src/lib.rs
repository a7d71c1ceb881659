//! Moments of non-linear functionals of stationary semicircular sequences.
//!
//! The crate covers the combinatorics of contraction vectors, the
//! limit-process kernels of the non-central limit theorem, free cumulant
//! formulas, and random-matrix simulators used to check both the free
//! central and non-central limit theorems numerically.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod combinat;
pub mod error;
pub mod freecalc;
pub mod kernels;
pub mod linalg;
pub mod moments;
pub mod poly;
pub mod quad;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/polynomials.md")]
    mod polynomials {}
    #[doc = include_str!("../../../book/src/contractions.md")]
    mod contractions {}
    #[doc = include_str!("../../../book/src/free-probability.md")]
    mod free_probability {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
