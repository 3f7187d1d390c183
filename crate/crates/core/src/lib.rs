//! Exact simulation of one particle in a nested Mach-Zehnder interferometer
//! with weakly coupled qubit probes.
//!
//! The crate covers three kinds of analysis of the same setup:
//!
//! * [`evolution`]: exact joint detector/probe statistics and reproducible
//!   Monte Carlo coincidence tables;
//! * [`histories`]: consistent-histories chain kets, decoherence matrices,
//!   framework consistency and the single-framework rule;
//! * [`weaktrace`]: weak values under pre- and post-selection and a
//!   side-by-side comparison with the histories verdicts.
//!
//! Interferometers are described in a small text format, see
//! [`interferometer::parse_itf`].

pub mod cli;
mod error;
pub mod evolution;
pub mod histories;
pub mod interferometer;
pub mod linalg;
pub mod probes;
pub mod report;
pub mod weaktrace;

pub use error::{Error, Result};
