//! File formats, configuration and image IO for the `mscsp` command-line tool.

pub mod config;
pub mod curves;
pub mod error;
pub mod formats;
pub mod fuse;
pub mod imageio;
pub mod mapdump;

pub use error::{IoError, LineError};
