//! IO, file formats, the batch pipeline, the HTTP service and the synthetic
//! corpus generator around `horizon-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod error;
pub mod labels;
pub mod mallet;
pub mod pipeline;
pub mod report;
pub mod service;
pub mod synth;
pub mod tables;

pub use error::{Result, ScanError};
