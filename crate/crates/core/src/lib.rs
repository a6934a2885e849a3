//! Vieta involutions on the Markov-type cubic surfaces
//! `x² + y² + z² + xyz = Ax + By + Cz + D`.

pub mod boundary;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod infinity;
pub mod linalg;
pub mod orbits;
pub mod policy;
pub mod scalar;
pub mod stats;
pub mod symplectic;
pub mod vieta;
pub mod walk;

pub use error::{Error, Result};
pub use geometry::{SurfaceParams, SurfacePoint, TraceParams};
pub use policy::NumericPolicy;
pub use vieta::{Letter, ReducedWord, Word};
