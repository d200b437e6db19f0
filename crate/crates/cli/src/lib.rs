//! Library side of the `abrate` command: input loading, subcommand bodies,
//! reproduction anchors and SVG output.

pub mod commands;
pub mod error;
pub mod input;
pub mod reproduce;
pub mod svg;

pub use error::{CliError, CliResult};
