//! Command-line front end for the mixed-frequency synthesis pipeline.
//!
//! The library half holds everything the binary does apart from argument
//! parsing, so integration tests can drive full runs in process: TOML
//! configuration ([`config`]), staged execution and artifact writing
//! ([`pipeline`]), and synthetic truth-audited runs ([`scenario`]).

pub mod config;
pub mod pipeline;
pub mod scenario;
