//! Numerical core for multi-hop underwater optical wireless sensor networks.
//!
//! The crate is split along the physical pipeline:
//!
//! - [`channel`]: water attenuation coefficients, the optical link budget and
//!   range inversion through the Lambert W function.
//! - [`netgraph`]: random sector directed graphs, descendants/antecedents,
//!   degree-based k-connectivity and shortest paths.
//! - [`connectivity`]: closed-form connectivity probabilities for k = 1, 2 and
//!   the Monte Carlo estimators used to check them.
//! - [`localization`]: noisy distance observation, fixed-rank Riemannian CG
//!   completion, classical MDS, similarity Procrustes alignment, plus the
//!   MDS-MAP and DV-hop baselines.
//!
//! Randomness always enters through an explicit RNG argument; see [`rng`] for
//! how independent substreams are derived from one root seed.

pub mod channel;
pub mod connectivity;
mod error;
pub mod localization;
pub mod netgraph;
pub mod rng;

pub use error::{Error, Result};
