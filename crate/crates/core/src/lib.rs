//! Learning unitary Stinespring dilations of open-system quantum channels.
//!
//! The pipeline: [`lindblad`] produces exact target evolution and training data,
//! [`ansatz`] builds a parametrized unitary on system ⊗ ancilla registers from
//! gate layers or piecewise-constant pulses on a neutral-atom model
//! ([`hardware`]), [`training`] fits it, [`channel`] turns it into a channel and
//! extrapolates in time, and [`metrics`] scores the result.

pub mod error;
pub mod ansatz;
pub mod channel;
pub mod hardware;
pub mod lindblad;
pub mod linalg;
pub mod metrics;
pub mod training;

pub use error::{Error, Result};
