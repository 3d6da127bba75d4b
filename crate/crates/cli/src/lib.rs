//! Library side of the `symwm` command: configuration, pipelines and commands.

pub mod commands;
pub mod config;
pub mod pipeline;
