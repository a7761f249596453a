//! Foundational types shared by all other modules: 9DoF poses, rigid
//! transforms, dense voxel grids, and axis-aligned boxes.

mod grid;
mod pose;
mod rotation;

pub use grid::VoxelGrid;
pub use pose::{Pose9Dof, RigidTransform};
pub use rotation::{
    axis_angle_matrix, is_rotation_matrix, random_rotation, rotation_angle_deg, rotation_y_deg,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box given by its geometric center and full side lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObbBox {
    pub center: [f64; 3],
    pub extents: [f64; 3],
}

impl ObbBox {
    pub fn new(center: Vector3<f64>, extents: Vector3<f64>) -> Result<Self> {
        if !(extents.x > 0.0 && extents.y > 0.0 && extents.z > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "box extents must be positive, got {:?}",
                extents
            )));
        }
        Ok(Self {
            center: center.into(),
            extents: extents.into(),
        })
    }

    pub fn center_vec(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    pub fn extents_vec(&self) -> Vector3<f64> {
        Vector3::from(self.extents)
    }

    pub fn min_corner(&self) -> Vector3<f64> {
        self.center_vec() - 0.5 * self.extents_vec()
    }

    pub fn max_corner(&self) -> Vector3<f64> {
        self.center_vec() + 0.5 * self.extents_vec()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let lo = self.min_corner();
        let hi = self.max_corner();
        (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k])
    }

    pub fn volume(&self) -> f64 {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    /// Intersection-over-union of two axis-aligned boxes.
    pub fn iou(&self, other: &ObbBox) -> f64 {
        let lo_a = self.min_corner();
        let hi_a = self.max_corner();
        let lo_b = other.min_corner();
        let hi_b = other.max_corner();
        let mut inter = 1.0;
        for k in 0..3 {
            let lo = lo_a[k].max(lo_b[k]);
            let hi = hi_a[k].min(hi_b[k]);
            if hi <= lo {
                return 0.0;
            }
            inter *= hi - lo;
        }
        inter / (self.volume() + other.volume() - inter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_rejects_nonpositive_extents() {
        assert!(ObbBox::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 1.0)).is_err());
        assert!(ObbBox::new(Vector3::zeros(), Vector3::new(1.0, -1.0, 1.0)).is_err());
    }

    #[test]
    fn iou_identical_is_one() {
        let b = ObbBox::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(1.0, 1.0, 2.0)).unwrap();
        assert!((b.iou(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = ObbBox::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        let b = ObbBox::new(Vector3::new(5.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // Unit cubes shifted by half an edge: intersection 0.5, union 1.5.
        let a = ObbBox::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        let b = ObbBox::new(Vector3::new(0.5, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        assert!((a.iou(&b) - 0.5 / 1.5).abs() < 1e-12);
    }
}
