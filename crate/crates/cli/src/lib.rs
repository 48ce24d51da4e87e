//! Library surface of the CLI: configuration, pipeline composition, and the
//! subcommand implementations, kept callable so integration tests can run
//! the exact code paths the binary does.

pub mod commands;
pub mod config;
pub mod pipeline;
