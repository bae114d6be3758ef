//! Neutron propagation-based phase-contrast imaging: experiment design,
//! forward simulation, single-material phase retrieval and parallel-beam
//! tomography.

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fourier;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod material;
pub mod metrics;
pub mod physics;
mod projector;
pub mod raster;
pub mod retrieve;
pub mod spectrum;
pub mod tomo;
pub mod volume;

pub use error::{Error, Result};
pub use fourier::Padding;
pub use geometry::BeamGeometry;
pub use material::Material;
pub use raster::{Raster2D, RasterKind, Roi};
pub use spectrum::{SpectralBin, Spectrum};
pub use volume::{Cylinder, Volume3D, VolumeKind};
