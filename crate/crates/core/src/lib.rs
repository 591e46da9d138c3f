//! Hyperbolicity-preserving learned moment closures for radiative transfer
//! in slab geometry.

pub mod bench;
pub mod closure;
pub mod data;
pub mod error;
pub mod kinetic;
pub mod linalg;
pub mod momsolver;
pub mod nn;
pub mod polyalg;
pub mod scheme;

pub use error::{Error, Result};
