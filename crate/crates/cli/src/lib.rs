//! Library half of the `delaycomp` binary: scenario configs and the
//! subcommands that run them.

pub mod commands;
pub mod config;
