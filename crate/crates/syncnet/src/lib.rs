//! File formats, experiment assembly and command implementations on top of
//! `syncnet-core`.

pub mod cases;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;

pub use error::CliError;
