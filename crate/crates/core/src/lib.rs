//! Monte-Carlo model of a trapped-ion single-photon link with cascaded
//! quantum frequency conversion.
//!
//! The pipeline is `source` → `qfc` → `detection` → `analysis`. Photon
//! streams are integer-picosecond [`TimestampStream`]s; every stochastic step
//! takes a [`Seed`] and is bit-reproducible.

pub mod analysis;
pub mod detection;
pub mod error;
pub mod par;
pub mod qfc;
pub mod rng;
pub mod source;
pub mod stream;

pub use error::{Error, Result};
pub use rng::Seed;
pub use stream::{Picos, TimestampStream};
