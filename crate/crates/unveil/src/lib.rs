//! Std companion to `unveil-core`: file formats, checkpoints, strict
//! configuration, multi-threaded search, pipeline orchestration and the
//! `unveil` command-line tool.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
