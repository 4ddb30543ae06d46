//! Numerical laboratory for decoherence and Brownian reduction.
//!
//! * [`hilbert`]: dense operators on a `collective ⊗ environment` space.
//! * [`decoherence`]: the split `ρ = ρ(K) ⊗ ρ(E) + ρ″`, thermal matching,
//!   the second-order reduced dynamics and the channel-probability drift.
//! * [`models`]: the pointer–bath and pointer–ruler–phonon scenarios.
//! * [`reduction`]: Brownian motion of channel probabilities on the simplex
//!   with face absorption, and the statistics built on it.

pub mod decoherence;
pub mod error;
pub mod hilbert;
pub mod models;
pub mod random;
pub mod reduction;

pub use error::{Error, Result};
