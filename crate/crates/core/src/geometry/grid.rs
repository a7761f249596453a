//! Dense 3D voxel grid with x-fastest linear cell order.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Dense voxel grid. `origin` is the world position of the center of voxel
/// `(0, 0, 0)`; cells are stored x-fastest:
/// `linear = x + dims[0] * (y + dims[1] * z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<C> {
    dims: [usize; 3],
    origin: Vector3<f64>,
    voxel_size: f64,
    cells: Vec<C>,
}

impl<C: Clone> VoxelGrid<C> {
    pub fn filled(dims: [usize; 3], origin: Vector3<f64>, voxel_size: f64, fill: C) -> Result<Self> {
        Self::from_cells(dims, origin, voxel_size, vec![fill; dims[0] * dims[1] * dims[2]])
    }
}

impl<C> VoxelGrid<C> {
    pub fn from_cells(
        dims: [usize; 3],
        origin: Vector3<f64>,
        voxel_size: f64,
        cells: Vec<C>,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter(format!(
                "grid dims must be positive, got {:?}",
                dims
            )));
        }
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if cells.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "grid of dims {:?} needs {} cells, got {}",
                dims,
                expected,
                cells.len()
            )));
        }
        Ok(Self {
            dims,
            origin,
            voxel_size,
            cells,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[C] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [C] {
        &mut self.cells
    }

    #[inline]
    pub fn linear_index(&self, idx: [usize; 3]) -> usize {
        debug_assert!(idx[0] < self.dims[0] && idx[1] < self.dims[1] && idx[2] < self.dims[2]);
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    #[inline]
    pub fn index_3d(&self, linear: usize) -> [usize; 3] {
        let x = linear % self.dims[0];
        let rest = linear / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, idx: [usize; 3]) -> &C {
        &self.cells[self.linear_index(idx)]
    }

    #[inline]
    pub fn get_mut(&mut self, idx: [usize; 3]) -> &mut C {
        let li = self.linear_index(idx);
        &mut self.cells[li]
    }

    /// World position of a voxel center.
    #[inline]
    pub fn world_pos(&self, idx: [usize; 3]) -> Vector3<f64> {
        self.origin
            + self.voxel_size
                * Vector3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64)
    }

    /// Nearest voxel for a world point, if inside the grid.
    ///
    /// Exactly inverts [`world_pos`](Self::world_pos) for in-bounds indices.
    #[inline]
    pub fn index_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let r = (p - self.origin) / self.voxel_size;
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let i = r[k].round();
            if i < 0.0 || i >= self.dims[k] as f64 {
                return None;
            }
            idx[k] = i as usize;
        }
        Some(idx)
    }

    /// Yields every 3D index in storage order (x fastest).
    pub fn indices(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nz).flat_map(move |z| (0..ny).flat_map(move |y| (0..nx).map(move |x| [x, y, z])))
    }

    /// Extent spanned by the voxel volume (from outer face to outer face).
    pub fn span(&self) -> Vector3<f64> {
        self.voxel_size
            * Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64)
    }

    pub fn map_cells<D>(&self, f: impl FnMut(&C) -> D) -> VoxelGrid<D> {
        VoxelGrid {
            dims: self.dims,
            origin: self.origin,
            voxel_size: self.voxel_size,
            cells: self.cells.iter().map(f).collect(),
        }
    }

    pub fn same_dims<D>(&self, other: &VoxelGrid<D>) -> bool {
        self.dims == other.dims
    }
}

impl VoxelGrid<f32> {
    /// Trilinear interpolation at a world point; `None` outside the sampled
    /// lattice of voxel centers.
    pub fn sample_trilinear(&self, p: &Vector3<f64>) -> Option<f64> {
        let (base, frac) = self.interp_cell(p)?;
        let mut acc = 0.0;
        for corner in 0..8usize {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..3 {
                if corner >> k & 1 == 1 {
                    idx[k] += 1;
                    w *= frac[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            acc += w * f64::from(*self.get(idx));
        }
        Some(acc)
    }

    pub(crate) fn interp_cell(&self, p: &Vector3<f64>) -> Option<([usize; 3], [f64; 3])> {
        let r = (p - self.origin) / self.voxel_size;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..3 {
            let f = r[k].floor();
            if f < 0.0 || f + 1.0 > self.dims[k] as f64 - 1.0 + 1e-12 {
                // Allow points that sit exactly on the last voxel center.
                if (r[k] - (self.dims[k] as f64 - 1.0)).abs() < 1e-9 && self.dims[k] >= 2 {
                    base[k] = self.dims[k] - 2;
                    frac[k] = 1.0;
                    continue;
                }
                return None;
            }
            base[k] = f as usize;
            frac[k] = r[k] - f;
        }
        Some((base, frac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_order_is_x_fastest() {
        let g = VoxelGrid::filled([3, 4, 5], Vector3::zeros(), 1.0, 0u8).unwrap();
        assert_eq!(g.linear_index([1, 0, 0]), 1);
        assert_eq!(g.linear_index([0, 1, 0]), 3);
        assert_eq!(g.linear_index([0, 0, 1]), 12);
        for lin in [0usize, 7, 33, 59] {
            assert_eq!(g.linear_index(g.index_3d(lin)), lin);
        }
    }

    #[test]
    fn world_round_trip_is_exact_for_all_indices() {
        let g = VoxelGrid::filled(
            [7, 5, 9],
            Vector3::new(-1.3, 0.7, 2.9),
            0.047,
            0u8,
        )
        .unwrap();
        for idx in g.indices() {
            assert_eq!(g.index_of(&g.world_pos(idx)), Some(idx));
        }
    }

    #[test]
    fn out_of_bounds_points_are_rejected() {
        let g = VoxelGrid::filled([4, 4, 4], Vector3::zeros(), 0.5, 0u8).unwrap();
        assert_eq!(g.index_of(&Vector3::new(-0.3, 0.0, 0.0)), None);
        assert_eq!(g.index_of(&Vector3::new(0.0, 0.0, 1.8)), None);
    }

    #[test]
    fn trilinear_reproduces_linear_fields() {
        // A field linear in x,y,z is reproduced exactly by trilinear blending.
        let dims = [5, 6, 7];
        let origin = Vector3::new(0.5, -0.25, 1.0);
        let vs = 0.2;
        let mut g = VoxelGrid::filled(dims, origin, vs, 0.0f32).unwrap();
        for idx in g.indices().collect::<Vec<_>>() {
            let p = g.world_pos(idx);
            *g.get_mut(idx) = (3.0 * p.x - 2.0 * p.y + 0.5 * p.z + 1.0) as f32;
        }
        let probe = Vector3::new(0.93, 0.31, 1.77);
        let v = g.sample_trilinear(&probe).unwrap();
        assert_abs_diff_eq!(
            v,
            3.0 * probe.x - 2.0 * probe.y + 0.5 * probe.z + 1.0,
            epsilon = 1e-5
        );
    }

    proptest! {
        #[test]
        fn index_world_round_trip_random_grids(
            nx in 1usize..12, ny in 1usize..12, nz in 1usize..12,
            ox in -10.0f64..10.0, oy in -10.0f64..10.0, oz in -10.0f64..10.0,
            vs in 0.001f64..2.0,
            sx in 0usize..12, sy in 0usize..12, sz in 0usize..12,
        ) {
            let g = VoxelGrid::filled([nx, ny, nz], Vector3::new(ox, oy, oz), vs, 0u8).unwrap();
            let idx = [sx % nx, sy % ny, sz % nz];
            prop_assert_eq!(g.index_of(&g.world_pos(idx)), Some(idx));
        }
    }
}
