//! Commands behind the `pastpose` binary.

pub mod commands;
pub mod config;
pub mod draw;
