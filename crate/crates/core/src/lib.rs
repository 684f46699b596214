//! Phase retrieval with the difference map.
//!
//! Objects live on periodic grids in one to three dimensions. The Fourier modulus
//! is the measured datum; the object constraint is one of support, positivity,
//! histogram, atomicity or the Sayre equation.

pub mod affine;
pub mod atoms;
pub mod dynamics;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod harness;
pub mod io;
pub mod projections;
pub mod sayre;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{Grid, ModulusData, ObjectField, SpectrumField};
pub use projections::Projection;
