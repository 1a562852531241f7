//! Numerical laboratory for semilinear damped wave equations
//! `u_tt - Δu + b(t) u_t = |u|^p`.

pub mod cutoff;
pub mod damping;
pub mod error;
pub mod experiments;
pub mod heat;
pub mod profile;
pub mod quad;
pub mod scaled;
pub mod wave;

pub use error::{Error, Result};
