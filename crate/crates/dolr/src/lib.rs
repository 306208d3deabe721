//! Driver around `dolr-core`: configuration files, CSV output, the
//! experiments behind each subcommand, and the acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod output;
