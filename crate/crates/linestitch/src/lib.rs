//! File formats, PNG I/O and the command-line front end for
//! [`linestitch_core`].

pub mod cli;
pub mod debug;
pub mod error;
pub mod format;
pub mod imageio;

pub use error::{Error, FormatError, Result};
pub use linestitch_core as core;
