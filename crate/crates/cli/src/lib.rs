//! Library surface of the CLI: configuration, binary containers, and the
//! subcommand pipelines, reusable from integration tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
