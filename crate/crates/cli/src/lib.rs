//! Batch front end for phasebeam. `main.rs` only parses arguments, sets up
//! logging and the thread pool, and maps errors to exit codes.

pub mod args;
pub mod commands;
pub mod exit;
pub mod manifest;
pub mod pipeline;
