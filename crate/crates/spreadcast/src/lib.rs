//! File I/O, downloading, configuration and the staged pipeline around
//! `spreadcast-core`.

pub mod config;
pub mod error;
pub mod fetch;
pub mod formats;
pub mod gkg_io;
pub mod pipeline;
pub mod synth;
pub mod variants;

pub use error::{Error, Result};
pub use spreadcast_core as core;
