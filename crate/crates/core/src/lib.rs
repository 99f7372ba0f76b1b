//! Continuum first-passage percolation through a Poisson field of
//! ball-shaped defects.
//!
//! Geometry is expressed in rescaled coordinates (radius-1 balls, intensity
//! `u`); [`model::SimParams`] converts to the unscaled picture.

pub mod clusters;
pub mod error;
pub mod estimators;
pub mod io;
pub mod limits;
pub mod metric;
pub mod model;
pub mod sampler;

pub use error::{Error, Result};
