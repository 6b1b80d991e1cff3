//! Random walks confined to cones.
//!
//! The crate covers the cone catalog and its spectral data, Brownian
//! exit kernels, lattice walk models, the harmonic function V of the
//! killed walk, exact survival dynamic programs and conditioned samplers,
//! lattice path counting, statistical tools and an experiment runner.

pub mod bm;
pub mod conditioned;
pub mod cone;
pub mod counting;
pub mod dp;
pub mod error;
pub mod experiment;
pub mod harmonic;
pub mod lattice;
pub mod par;
pub mod special;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
