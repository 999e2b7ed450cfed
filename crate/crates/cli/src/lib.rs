//! Command line pipeline and HTTP suggestion service.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod server;

pub use commands::{run, Cli};
pub use config::Config;
