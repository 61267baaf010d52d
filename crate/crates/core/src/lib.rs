//! Synthesis and measurement of point processes with a prescribed degree of
//! hyperuniformity on periodic boxes.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`geom`]: periodic boxes, convex cells, exact polynomial moments.
//! * [`tessellate`]: fair STIT tilings with equal-volume cells.
//! * [`avset`]: averaging sets (equal-weight moment-matching point sets).
//! * [`construct`]: point-process constructors on a [`geom::TorusBox`].
//! * [`randfield`]: stationary Gaussian random fields on a periodic grid.
//! * [`spectral`]: structure-factor estimation and spectral oracles.
//! * [`realspace`]: number-variance scans and exponent fits.

pub mod avset;
pub mod construct;
pub mod error;
pub mod fit;
pub mod fourier;
pub mod geom;
pub mod io;
pub mod randfield;
pub mod realspace;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod tessellate;

pub use error::{Error, Result};
