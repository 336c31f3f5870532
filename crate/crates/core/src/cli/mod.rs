//! Command-line front end: run configuration, CSV output, and the runner
//! that maps a parsed config onto the library calls.

pub mod config;
pub mod output;
pub mod runner;
