//! File formats, parallel drivers, synthetic data and the command-line
//! front end over `firmscape-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod parallel;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
