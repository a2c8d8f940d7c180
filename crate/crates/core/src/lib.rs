//! Finite-key phase-error estimation for loss-tolerant QKD.

pub mod error;
pub mod qubit;
pub mod sampling;
pub mod concentration;
pub mod config;
pub mod pm;
pub mod mdi;
pub mod channel;
pub mod keyrate;

pub use error::{Error, Result};
