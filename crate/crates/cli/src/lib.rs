//! Command-line pipeline around the `rcs` crate: configuration, fold-wise
//! evaluation and the individual commands.

pub mod commands;
pub mod config;
pub mod pipeline;

pub use config::{Method, RunConfig};
