//! Geometry engine for aligning CAD models to objects of a 3D scan.
//!
//! The crate covers the full alignment pipeline as testable math, end to end
//! on synthetic scenes with known ground truth:
//!
//! * [`geometry`] — 9DoF poses (translation, rotation, per-axis scale),
//!   dense voxel grids, oriented boxes.
//! * [`tsdf`] — depth-frame rendering, truncated signed distance fusion,
//!   unsigned distance fields for CAD shapes.
//! * [`procrustes`] — weighted orthogonal Procrustes rotation with
//!   reflection correction, a similarity (Umeyama) variant, and analytic
//!   gradients through the SVD.
//! * [`symmetry`] — rotational symmetry groups and symmetry-aware
//!   losses/errors.
//! * [`correspondence`] — normalized object coordinate grids, instance
//!   masks, per-object 9DoF alignment, and a RANSAC baseline.
//! * [`detection`] — objectness/offset/box losses on voxel grids and
//!   heatmap peak extraction.
//! * [`retrieval`] — 512-d shape descriptors with exact nearest-neighbor
//!   lookup.
//! * [`synth`] — synthetic scene generation (virtual scanning) with exact
//!   ground truth, plus controlled perturbation.
//! * [`eval`] — the 20cm/20°/20% acceptance criterion, scene alignment,
//!   accuracy reports, and runtime benchmarks.
//!
//! With the `parallel` feature (default) the data-parallel kernels run on
//! rayon; without it everything runs sequentially. Every parallel kernel has
//! a `_serial` twin with identical output, used by the benchmark suite to
//! compare both paths.

pub mod correspondence;
pub mod detection;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod procrustes;
pub mod retrieval;
pub mod shape;
pub mod symmetry;
pub mod synth;
pub mod tsdf;

pub use error::{Error, Result};
pub use exec::ExecMode;
