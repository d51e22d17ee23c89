//! Numerical core for bibliometric horizon scanning.
//!
//! Everything in this crate is pure computation over in-memory data and only
//! needs `alloc`: vocabulary preparation, a collapsed Gibbs LDA sampler, the
//! exponential growth fit with CAGR and reduced chi-squared, location
//! quotients with propagated errors, and topic-map layout. File formats, the
//! CLI and the HTTP service live in the `horizon-scan` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is how NaN gets rejected together with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over matrix dimensions read better than zipped iterators here.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod growth;
pub mod histogram;
pub mod layout;
pub mod lda;
pub mod lq;
pub mod matrix;
pub mod text;

pub use error::{Error, Result};
pub use matrix::Matrix;
