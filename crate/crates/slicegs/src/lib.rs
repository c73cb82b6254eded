//! Files, checkpoints and the `slicegs` command line on top of
//! `slicegs-core`.

pub mod cli;
mod error;
pub mod io;

pub use error::{Error, Result};
pub use slicegs_core as core;
