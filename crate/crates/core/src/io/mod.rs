//! File formats: the VXG1 binary voxel-grid container.

pub mod vxg;

pub use vxg::{read_grid, write_grid, GridCell};
