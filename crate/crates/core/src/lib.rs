//! Frequency-domain microphone-array source separation.
//!
//! The processing chain is:
//!
//! ```text
//!   mics ──► stft ──► gss (y = W x, adaptive W) ──► postfilter ──► istft ──► sources
//!                        ▲                              ▲
//!                  geometry (A(k))            stationary + leakage noise
//! ```
//!
//! [`simulate`] renders synthetic scenes with known ground truth and
//! [`metrics`] scores the separated outputs. [`pipeline`] wires everything
//! together for the five comparison variants.

pub mod error;
mod fftconv;
pub mod geometry;
pub mod gss;
pub mod metrics;
pub mod pipeline;
pub mod postfilter;
pub mod simulate;
pub mod special;
pub mod stft;

pub use error::{Error, Result};
pub use num_complex::Complex64;
