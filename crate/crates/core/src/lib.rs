//! Robust min-max interference-leakage beamforming for a full-duplex
//! cognitive-radio secondary network.
//!
//! The pipeline per Monte Carlo trial is
//! [`channel`] → [`receivers`] → [`problem`] → [`solver`] → [`recovery`] → [`oracle`],
//! and [`experiments`] drives sweeps of trials and writes CSV results.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod receivers;
pub mod recovery;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
