//! File formats, configuration, a parallel client executor and the
//! command-line front end for `fedload-core`.

pub mod artifacts;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod executor;
pub mod io;

pub use error::{Error, Result};
pub use executor::RayonExecutor;
