//! Networked control of a linear plant under bounded time-varying input and
//! output delays.
//!
//! The crate provides the plant models for a vehicle lateral-control task,
//! delay channels, a predictor-observer controller that only needs the
//! (measurable) output delay, the delay-free interconnected representation
//! of the closed loop with its matrix-inequality stability test, and a
//! closed-loop simulation harness with a command-line front end.

pub mod cli;
pub mod delay;
pub mod error;
pub mod linalg;
pub mod predictor;
pub mod sim;
pub mod stability;
pub mod vehicle;

pub use error::{Error, Result};
