//! Monte-Carlo engine for dynamically orthogonal (DO) and dynamical
//! low-rank (DLRA) approximations of SDEs.
//!
//! The probability space is an ensemble of `N` equally weighted atoms, so
//! every expectation, Gram matrix and projector is exact linear algebra.
//! A DO state is a pair `(U, Y)` with `U` an `R x d` matrix with orthonormal
//! rows and `Y` an `N x R` ensemble; the approximation is `X = U^T Y`.

#![no_std]
// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod diagnostics;
pub mod error;
pub mod integrators;
pub mod kernels;
pub mod models;
pub mod paths;
pub mod rank_control;

pub use error::{DolrError, Result};
