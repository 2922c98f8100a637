//! The `strokeprim` command line and the HTTP rating service.

pub mod cli;
pub mod commands;
pub mod files;
pub mod replay;
pub mod service;
