//! Targetless extrinsic calibration between a 3-D LiDAR and a 2-D scanning
//! radar.
//!
//! Radar pixels above an intensity threshold are expanded into wedge-shaped
//! cells in cylindrical coordinates. A candidate LiDAR-to-radar transform is
//! scored by how many transformed LiDAR points fall inside those cells, how
//! close they sit to each cell's vertical center, and how bright the cell is.
//! The transform is recovered by maximizing that score with a bound-constrained
//! trust-region method.
//!
//! The [`synth`] module renders matching LiDAR and radar data of a known
//! scene under a known transform, which the test suites use as ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod dataio;
pub mod exec;
pub mod geometry;
pub mod optimizer;
pub mod radar_grid;
pub mod synth;

mod error;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use geometry::{CylindricalPoint, Extrinsics, Point3};
