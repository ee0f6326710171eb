//! File formats, run configuration and subcommands of the `graphdeepar`
//! command-line tool. The numerics live in `graphdeepar-core`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use error::{CliError, Result};
