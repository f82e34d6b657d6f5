//! Command-line front end: problem files, instance generation and the
//! `trs`, `solve`, `gen`, `pca` and `bench` subcommands.

pub mod commands;
pub mod generate;
pub mod problem_file;

pub use commands::{run, Output};
pub use generate::{generate, GenSpec};
pub use problem_file::{ParseError, ProblemFile};
