//! File formats, dataset readers, evaluation driver and command-line support
//! on top of [`epn_core`].

pub mod config;
pub mod driver;
pub mod error;
pub mod format;
pub mod ingest;
pub mod parallel;

pub use epn_core as core;
pub use error::{Error, Result};
