pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod fusion;
pub mod fuzz;
pub mod gp;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod pic;
pub mod policy;
pub mod sensing;
pub mod sim;

pub use error::{Error, Result};
