//! Dataset IO, reports and the command-line pipeline around
//! [`cranscope_core`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{AppError, AppResult};
