//! Electromagnetic scattering by many small perfectly conducting particles.

pub mod continuum;
pub mod em;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod many_body;
pub mod materials;
pub mod radiation;
pub mod reduction;
pub mod single_body;

pub use error::{Error, Result};
