//! Simulation and verification toolkit for martingale approximation and
//! strong invariance principles of stationary processes.

pub mod coupling;
pub mod dependence;
pub mod error;
pub mod numerics;
pub mod numtheory;
pub mod processes;
pub mod projective;
pub mod quantile;
pub mod rng;
pub mod stats;

pub use error::{Result, SipError};
pub use rng::SeedStream;
