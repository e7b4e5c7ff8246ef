//! The `cogbench` command line and the human-baseline HTTP service.

pub mod cli;
pub mod service;
pub mod session;
