//! Simulation and numerical verification toolkit for fractional Brownian
//! motion time-changed by an independent strictly stable process.
//!
//! Every random draw is keyed by `(master seed, path, coordinate, role)`, so
//! results are reproducible regardless of the rayon worker count.

pub mod density;
pub mod error;
pub mod fbm;
pub mod local_time;
pub mod pde;
pub mod process;
pub mod quad;
pub mod rng;
pub mod scaling_limit;
pub mod special_integrals;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
pub use fbm::FbmSpec;
pub use pde::{CheckStatus, PdeCase, PdeProblem, PdeReport};
pub use process::{ProcessPath, ProcessSpec};
pub use stable::{StableKind, StableSpec};
