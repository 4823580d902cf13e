//! Library half of the `arraysep` command: configuration, WAV I/O,
//! spectrogram dumps and the two subcommands.

pub mod config;
pub mod error;
pub mod run;
pub mod spectrogram;
pub mod wav;

pub use error::{CliError, Result};
