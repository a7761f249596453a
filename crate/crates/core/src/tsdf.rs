//! Truncated signed distance fusion of depth frames, unsigned distance
//! fields for CAD shapes, and a depth renderer for virtual scanning.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::{Pose9Dof, RigidTransform, VoxelGrid};
use crate::io::GridCell;
use crate::shape::Shape;

/// Free-space band in front of the surface, as a multiple of the truncation
/// distance. Symmetric band: voxels farther in front than `trunc` stay
/// unobserved.
const K_FRONT: f64 = 1.0;

/// One TSDF cell: truncated signed distance (meters) and accumulation
/// weight. Unobserved cells hold `d = +trunc, w = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsdfCell {
    pub d: f32,
    pub w: f32,
}

impl GridCell for TsdfCell {
    const TYPE_TAG: u32 = 1;
    const CELL_BYTES: usize = 8;

    fn write_le(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.d.to_le_bytes());
        buf.extend_from_slice(&self.w.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        TsdfCell {
            d: f32::from_le_bytes(bytes[..4].try_into().unwrap()),
            w: f32::from_le_bytes(bytes[4..8].try_into().unwrap()),
        }
    }
}

/// Fresh TSDF volume in the unobserved state.
pub fn tsdf_grid(
    dims: [usize; 3],
    origin: Vector3<f64>,
    voxel_size: f64,
    trunc: f64,
) -> Result<VoxelGrid<TsdfCell>> {
    VoxelGrid::filled(
        dims,
        origin,
        voxel_size,
        TsdfCell {
            d: trunc as f32,
            w: 0.0,
        },
    )
}

/// Pinhole camera parameters plus pose; `cam2world` maps camera coordinates
/// (+x right, +y down, +z forward) into world coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub cam2world: RigidTransform,
}

impl CameraSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cam2world.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "degenerate camera: fx={} fy={} cx={} cy={} {}x{}",
                self.fx, self.fy, self.cx, self.cy, self.width, self.height
            )))
        }
    }

    /// Camera looking from `eye` toward `target` with +y world up mapped to
    /// image-down camera convention.
    pub fn look_at(mut self, eye: Vector3<f64>, target: Vector3<f64>) -> Self {
        let forward = (target - eye).normalize();
        let world_up = Vector3::new(0.0, 1.0, 0.0);
        let mut right = forward.cross(&world_up);
        if right.norm() < 1e-9 {
            right = Vector3::new(1.0, 0.0, 0.0);
        } else {
            right.normalize_mut();
        }
        let down = forward.cross(&right).normalize();
        let rot = Matrix3::from_columns(&[right, down, forward]);
        self.cam2world = RigidTransform::new(
            nalgebra::UnitQuaternion::from_matrix(&rot),
            eye,
        );
        self
    }
}

/// A depth image with its camera. Depth is the camera-space z distance in
/// meters; 0 marks invalid pixels.
#[derive(Debug, Clone)]
pub struct DepthFrame {
    pub camera: CameraSpec,
    pub depth: Vec<f32>,
}

impl DepthFrame {
    pub fn new(camera: CameraSpec, depth: Vec<f32>) -> Result<Self> {
        camera.validate()?;
        if depth.len() != camera.width * camera.height {
            return Err(Error::DimensionMismatch(format!(
                "depth buffer has {} values for a {}x{} image",
                depth.len(),
                camera.width,
                camera.height
            )));
        }
        if depth.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidParameter(
                "depth values must be finite and non-negative".into(),
            ));
        }
        Ok(Self { camera, depth })
    }

    #[inline]
    pub fn depth_at(&self, u: usize, v: usize) -> f32 {
        self.depth[v * self.camera.width + u]
    }
}

/// Curless-Levoy style integration of one depth frame.
///
/// For every voxel projecting to a valid pixel with signed distance
/// `sdf = depth - cam_z` inside `(-trunc, +trunc)`, the cell is updated by
/// the running average `d <- (w*d + min(sdf, trunc)) / (w + 1)`,
/// `w <- w + 1`. All other voxels are untouched. Per-voxel updates are
/// independent, so the output is deterministic for any thread count.
pub fn integrate_frame(
    grid: &mut VoxelGrid<TsdfCell>,
    frame: &DepthFrame,
    trunc: f64,
) -> Result<()> {
    integrate_frame_impl(ExecMode::Parallel, grid, frame, trunc)
}

/// Sequential twin of [`integrate_frame`] with identical output.
pub fn integrate_frame_serial(
    grid: &mut VoxelGrid<TsdfCell>,
    frame: &DepthFrame,
    trunc: f64,
) -> Result<()> {
    integrate_frame_impl(ExecMode::Sequential, grid, frame, trunc)
}

fn integrate_frame_impl(
    mode: ExecMode,
    grid: &mut VoxelGrid<TsdfCell>,
    frame: &DepthFrame,
    trunc: f64,
) -> Result<()> {
    if !(trunc > 0.0 && trunc.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "truncation must be positive, got {trunc}"
        )));
    }
    if grid.voxel_size() >= trunc {
        return Err(Error::InvalidParameter(format!(
            "voxel size {} must be below the truncation {}",
            grid.voxel_size(),
            trunc
        )));
    }
    frame.camera.validate()?;

    let cam = &frame.camera;
    let world_to_cam_rot = cam.cam2world.rotation_matrix().transpose();
    let cam_t = cam.cam2world.translation;
    let [nx, ny, _] = grid.dims();
    let origin = grid.origin();
    let voxel_size = grid.voxel_size();
    let slab = nx * ny;
    let width = cam.width;
    let height = cam.height;

    exec::for_each_chunk_mut(mode, grid.cells_mut(), slab, |offset, cells| {
        let z = offset / slab;
        for (i, cell) in cells.iter_mut().enumerate() {
            let x = i % nx;
            let y = i / nx;
            let world = origin
                + voxel_size * Vector3::new(x as f64, y as f64, z as f64);
            let p_cam = world_to_cam_rot * (world - cam_t);
            if p_cam.z <= 1e-9 {
                continue;
            }
            let u = (cam.fx * p_cam.x / p_cam.z + cam.cx).round();
            let v = (cam.fy * p_cam.y / p_cam.z + cam.cy).round();
            if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
                continue;
            }
            let measured = f64::from(frame.depth[v as usize * width + u as usize]);
            if measured <= 0.0 {
                continue;
            }
            let sdf = measured - p_cam.z;
            if sdf <= -trunc || sdf >= trunc * K_FRONT {
                continue;
            }
            let clamped = sdf.min(trunc);
            let w_old = f64::from(cell.w);
            cell.d = ((w_old * f64::from(cell.d) + clamped) / (w_old + 1.0)) as f32;
            cell.w = (w_old + 1.0) as f32;
        }
    });
    Ok(())
}

/// Unsigned distance field of a normalized shape, sampled on a grid
/// spanning the unit cube (cell centers symmetric about the origin).
pub fn cad_unsigned_df(shape: &Shape, dims: [usize; 3]) -> Result<VoxelGrid<f32>> {
    cad_unsigned_df_impl(ExecMode::Parallel, shape, dims)
}

/// Sequential twin of [`cad_unsigned_df`] with identical output.
pub fn cad_unsigned_df_serial(shape: &Shape, dims: [usize; 3]) -> Result<VoxelGrid<f32>> {
    cad_unsigned_df_impl(ExecMode::Sequential, shape, dims)
}

fn cad_unsigned_df_impl(mode: ExecMode, shape: &Shape, dims: [usize; 3]) -> Result<VoxelGrid<f32>> {
    shape.validate()?;
    if !shape.fits_unit_cube() {
        return Err(Error::InvalidParameter(
            "shape must fit the unit cube [-0.5, 0.5]^3; normalize it first".into(),
        ));
    }
    let max_dim = *dims.iter().max().unwrap();
    if max_dim == 0 {
        return Err(Error::InvalidParameter("df dims must be positive".into()));
    }
    let voxel_size = 1.0 / max_dim as f64;
    let origin = Vector3::new(
        -voxel_size * (dims[0] as f64 - 1.0) / 2.0,
        -voxel_size * (dims[1] as f64 - 1.0) / 2.0,
        -voxel_size * (dims[2] as f64 - 1.0) / 2.0,
    );
    let mut grid = VoxelGrid::filled(dims, origin, voxel_size, 0.0f32)?;
    let [nx, ny, _] = dims;
    let slab = nx * ny;
    exec::for_each_chunk_mut(mode, grid.cells_mut(), slab, |offset, cells| {
        let z = offset / slab;
        for (i, cell) in cells.iter_mut().enumerate() {
            let x = i % nx;
            let y = i / nx;
            let p = origin + voxel_size * Vector3::new(x as f64, y as f64, z as f64);
            *cell = shape.surface_distance(&p) as f32;
        }
    });
    Ok(grid)
}

/// A shape placed in the world by a 9DoF pose.
#[derive(Debug, Clone)]
pub struct PlacedShape {
    pub shape: Shape,
    pub pose: Pose9Dof,
}

impl PlacedShape {
    /// Ray intersection in world space. The affine parameter `t` is
    /// preserved by the pose, so the ray is intersected in model space.
    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.pose.apply_inverse(origin);
        let d = self.pose.apply_inverse_vector(dir);
        self.shape.ray_hit(&o, &d)
    }

    /// World-space axis-aligned bounds of the posed shape.
    pub fn world_aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (lo, hi) = self.shape.aabb();
        let mut out_lo = Vector3::from_element(f64::INFINITY);
        let mut out_hi = Vector3::from_element(f64::NEG_INFINITY);
        for corner in 0..8usize {
            let c = Vector3::new(
                if corner & 1 == 0 { lo.x } else { hi.x },
                if corner & 2 == 0 { lo.y } else { hi.y },
                if corner & 4 == 0 { lo.z } else { hi.z },
            );
            let w = self.pose.apply(&c);
            out_lo = out_lo.inf(&w);
            out_hi = out_hi.sup(&w);
        }
        (out_lo, out_hi)
    }
}

/// Renders a depth frame by per-pixel ray casting against the scene, adding
/// Gaussian noise `N(0, sigma^2)` to hit depths (clamped to >= 0). Missed
/// pixels are 0. Ray casting is deterministic; noise is drawn from `rng` in
/// pixel order after casting, so the frame is reproducible for any thread
/// count.
pub fn render_depth<R: Rng + ?Sized>(
    scene: &[PlacedShape],
    camera: &CameraSpec,
    sigma: f64,
    rng: &mut R,
) -> Result<DepthFrame> {
    render_depth_impl(ExecMode::Parallel, scene, camera, sigma, rng)
}

/// Sequential twin of [`render_depth`] with identical output.
pub fn render_depth_serial<R: Rng + ?Sized>(
    scene: &[PlacedShape],
    camera: &CameraSpec,
    sigma: f64,
    rng: &mut R,
) -> Result<DepthFrame> {
    render_depth_impl(ExecMode::Sequential, scene, camera, sigma, rng)
}

fn render_depth_impl<R: Rng + ?Sized>(
    mode: ExecMode,
    scene: &[PlacedShape],
    camera: &CameraSpec,
    sigma: f64,
    rng: &mut R,
) -> Result<DepthFrame> {
    camera.validate()?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be non-negative, got {sigma}"
        )));
    }
    let rot = camera.cam2world.rotation_matrix();
    let eye = camera.cam2world.translation;
    let width = camera.width;
    let mut depth = vec![0.0f32; width * camera.height];
    exec::for_each_chunk_mut(mode, &mut depth, width, |offset, row| {
        let v = offset / width;
        for (u, px) in row.iter_mut().enumerate() {
            // Unnormalized direction with unit camera z, so the ray
            // parameter equals the camera-space depth.
            let d_cam = Vector3::new(
                (u as f64 - camera.cx) / camera.fx,
                (v as f64 - camera.cy) / camera.fy,
                1.0,
            );
            let d_world = rot * d_cam;
            let mut best = f64::INFINITY;
            for obj in scene {
                if let Some(t) = obj.ray_hit(&eye, &d_world) {
                    if t > 1e-9 {
                        best = best.min(t);
                    }
                }
            }
            if best.is_finite() {
                *px = best as f32;
            }
        }
    });

    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidParameter(format!("noise model: {e}")))?;
        for px in depth.iter_mut() {
            if *px > 0.0 {
                *px = (f64::from(*px) + normal.sample(rng)).max(0.0) as f32;
            }
        }
    }
    DepthFrame::new(camera.clone(), depth)
}

/// Sub-voxel surface points from the zero crossings of a fused volume.
/// Walks every observed voxel edge along +x/+y/+z and linearly interpolates
/// the sign change.
pub fn surface_points(grid: &VoxelGrid<TsdfCell>) -> Vec<Vector3<f64>> {
    let [nx, ny, nz] = grid.dims();
    let mut pts = Vec::new();
    for idx in grid.indices() {
        let a = *grid.get(idx);
        if a.w <= 0.0 {
            continue;
        }
        for axis in 0..3 {
            let mut nb = idx;
            nb[axis] += 1;
            if nb[axis] >= [nx, ny, nz][axis] {
                continue;
            }
            let b = *grid.get(nb);
            if b.w <= 0.0 {
                continue;
            }
            let (da, db) = (f64::from(a.d), f64::from(b.d));
            if da == 0.0 {
                pts.push(grid.world_pos(idx));
                continue;
            }
            if da * db < 0.0 {
                let t = da / (da - db);
                let pa = grid.world_pos(idx);
                let pb = grid.world_pos(nb);
                pts.push(pa + t * (pb - pa));
            }
        }
    }
    pts
}

/// Trilinear TSDF sample; `None` when any participating corner is
/// unobserved or the point leaves the lattice.
pub fn sample_tsdf(grid: &VoxelGrid<TsdfCell>, p: &Vector3<f64>) -> Option<f64> {
    let r = (p - grid.origin()) / grid.voxel_size();
    let dims = grid.dims();
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for k in 0..3 {
        let f = r[k].floor();
        if f < 0.0 || f >= dims[k] as f64 - 1.0 {
            if (r[k] - (dims[k] as f64 - 1.0)).abs() < 1e-9 && dims[k] >= 2 {
                base[k] = dims[k] - 2;
                frac[k] = 1.0;
                continue;
            }
            return None;
        }
        base[k] = f as usize;
        frac[k] = r[k] - f;
    }
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
        let cell = grid.get(idx);
        if cell.w <= 0.0 {
            return None;
        }
        acc += w * f64::from(cell.d);
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plane_scene(z: f64) -> Vec<PlacedShape> {
        // A huge box whose near face sits at the given z.
        vec![PlacedShape {
            shape: Shape::Cuboid {
                half_extents: [100.0, 100.0, 5.0],
            },
            pose: Pose9Dof::new(
                Vector3::new(0.0, 0.0, z + 5.0),
                nalgebra::UnitQuaternion::identity(),
                Vector3::from_element(1.0),
            )
            .unwrap(),
        }]
    }

    fn forward_camera(width: usize, height: usize) -> CameraSpec {
        CameraSpec {
            fx: width as f64,
            fy: width as f64,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
            cam2world: RigidTransform::identity(),
        }
    }

    #[test]
    fn noiseless_plane_matches_analytic_depth() {
        let cam = forward_camera(64, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = render_depth(&plane_scene(1.0), &cam, 0.0, &mut rng).unwrap();
        for v in 0..cam.height {
            for u in 0..cam.width {
                // Plane z = 1 hit along a ray with unit camera z: depth = 1.
                assert_abs_diff_eq!(f64::from(frame.depth_at(u, v)), 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn empty_scene_renders_zeros() {
        let cam = forward_camera(16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = render_depth(&[], &cam, 0.0, &mut rng).unwrap();
        assert!(frame.depth.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn render_noise_has_configured_std() {
        let cam = forward_camera(512, 256); // 131072 pixels
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = render_depth(&plane_scene(2.0), &cam, 0.01, &mut rng).unwrap();
        let residuals: Vec<f64> = frame
            .depth
            .iter()
            .map(|&d| f64::from(d) - 2.0)
            .collect();
        assert!(residuals.len() >= 100_000);
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
            / (residuals.len() - 1) as f64;
        let std = var.sqrt();
        assert!((0.009..=0.011).contains(&std), "std {std}");
    }

    #[test]
    fn parallel_and_serial_renders_match() {
        let cam = forward_camera(64, 48).look_at(
            Vector3::new(1.0, 1.5, -2.0),
            Vector3::new(0.0, 0.3, 0.0),
        );
        let scene = vec![PlacedShape {
            shape: Shape::Sphere { radius: 0.4 },
            pose: Pose9Dof::identity(),
        }];
        let mut rng1 = ChaCha8Rng::seed_from_u64(4);
        let mut rng2 = ChaCha8Rng::seed_from_u64(4);
        let a = render_depth(&scene, &cam, 0.005, &mut rng1).unwrap();
        let b = render_depth_serial(&scene, &cam, 0.005, &mut rng2).unwrap();
        assert_eq!(a.depth, b.depth);
    }

    #[test]
    fn degenerate_intrinsics_are_rejected() {
        let mut cam = forward_camera(16, 16);
        cam.fx = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(render_depth(&[], &cam, 0.0, &mut rng).is_err());
    }

    #[test]
    fn plane_fusion_zero_crossing_at_surface() {
        // Camera at origin looking +z onto a plane at z = 1; fuse one frame
        // and check the zero crossing along the center ray.
        let cam = forward_camera(128, 96);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frame = render_depth(&plane_scene(1.0), &cam, 0.0, &mut rng).unwrap();
        let voxel = 0.03;
        let trunc = 0.15;
        let mut grid = tsdf_grid(
            [8, 8, 60],
            Vector3::new(-4.0 * voxel, -4.0 * voxel, 0.05),
            voxel,
            trunc,
        )
        .unwrap();
        integrate_frame(&mut grid, &frame, trunc).unwrap();

        // Walk the column nearest the optical axis.
        let col = [4usize, 4usize];
        let mut crossing = None;
        for z in 0..59 {
            let a = *grid.get([col[0], col[1], z]);
            let b = *grid.get([col[0], col[1], z + 1]);
            if a.w > 0.0 && b.w > 0.0 && a.d > 0.0 && b.d <= 0.0 {
                let t = f64::from(a.d) / f64::from(a.d - b.d);
                let za = grid.world_pos([col[0], col[1], z]).z;
                crossing = Some(za + t * voxel);
            }
        }
        let z0 = crossing.expect("zero crossing exists");
        assert!((z0 - 1.0).abs() < voxel / 2.0, "crossing at {z0}");
    }

    #[test]
    fn voxels_far_behind_surface_stay_unobserved() {
        let cam = forward_camera(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = render_depth(&plane_scene(1.0), &cam, 0.0, &mut rng).unwrap();
        let trunc = 0.15;
        // One voxel 2*trunc behind the surface.
        let mut grid = tsdf_grid([1, 1, 1], Vector3::new(0.0, 0.0, 1.0 + 2.0 * trunc), 0.03, trunc)
            .unwrap();
        integrate_frame(&mut grid, &frame, trunc).unwrap();
        let cell = grid.get([0, 0, 0]);
        assert_eq!(cell.w, 0.0);
        assert_eq!(cell.d, trunc as f32);
    }

    #[test]
    fn repeated_identical_frames_do_not_drift() {
        let cam = forward_camera(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frame = render_depth(&plane_scene(1.0), &cam, 0.0, &mut rng).unwrap();
        let trunc = 0.15;
        let make = || tsdf_grid([8, 8, 40], Vector3::new(-0.12, -0.12, 0.4), 0.03, trunc).unwrap();
        let mut once = make();
        integrate_frame(&mut once, &frame, trunc).unwrap();
        let mut many = make();
        for _ in 0..7 {
            integrate_frame(&mut many, &frame, trunc).unwrap();
        }
        for (a, b) in once.cells().iter().zip(many.cells()) {
            assert_abs_diff_eq!(a.d, b.d, epsilon = 1e-6);
            if a.w > 0.0 {
                assert_abs_diff_eq!(f64::from(b.w), f64::from(a.w) * 7.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn parallel_and_serial_fusion_match() {
        let cam = forward_camera(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scene = vec![PlacedShape {
            shape: Shape::Sphere { radius: 0.5 },
            pose: Pose9Dof::new(
                Vector3::new(0.0, 0.0, 2.0),
                nalgebra::UnitQuaternion::identity(),
                Vector3::from_element(1.0),
            )
            .unwrap(),
        }];
        let frame = render_depth(&scene, &cam, 0.0, &mut rng).unwrap();
        let trunc = 0.15;
        let make = || tsdf_grid([40, 40, 40], Vector3::new(-0.6, -0.6, 1.4), 0.03, trunc).unwrap();
        let mut par = make();
        integrate_frame(&mut par, &frame, trunc).unwrap();
        let mut ser = make();
        integrate_frame_serial(&mut ser, &frame, trunc).unwrap();
        assert_eq!(par.cells(), ser.cells());
    }

    #[test]
    fn sphere_df_is_analytic() {
        let shape = Shape::Sphere { radius: 0.4 };
        let df = cad_unsigned_df(&shape, [32, 32, 32]).unwrap();
        let mut max_err = 0.0f64;
        for idx in df.indices() {
            let p = df.world_pos(idx);
            let expected = (p.norm() - 0.4).abs();
            max_err = max_err.max((f64::from(*df.get(idx)) - expected).abs());
        }
        assert!(max_err < 1e-6, "max error {max_err}");
    }

    #[test]
    fn unit_cube_shell_df_center_value() {
        let shape = Shape::Cuboid {
            half_extents: [0.5, 0.5, 0.5],
        };
        let df = cad_unsigned_df(&shape, [32, 32, 32]).unwrap();
        // Nearest cell to the center (no cell is exactly central at even dims).
        let v = f64::from(*df.get([16, 16, 16]));
        assert!((v - 0.5).abs() <= df.voxel_size() + 1e-9, "center df {v}");
        // Non-negative everywhere, zero only near the surface band.
        for idx in df.indices() {
            let d = *df.get(idx);
            assert!(d >= 0.0);
            if d < 1e-6 {
                let p = df.world_pos(idx);
                assert!(shape.surface_distance(&p) < 1e-5);
            }
        }
    }

    #[test]
    fn df_rejects_unnormalized_or_empty_shapes() {
        assert!(cad_unsigned_df(&Shape::Sphere { radius: 2.0 }, [32, 32, 32]).is_err());
        assert!(matches!(
            cad_unsigned_df(&Shape::Compound { parts: vec![] }, [8, 8, 8]),
            Err(Error::EmptyShape)
        ));
    }

    #[test]
    fn fused_sphere_surface_rms_below_voxel() {
        // 24 noiseless orbit views of a 0.5 m sphere, 3 cm voxels: RMS radial
        // error of the zero-crossing surface below one voxel.
        let scene = vec![PlacedShape {
            shape: Shape::Sphere { radius: 0.5 },
            pose: Pose9Dof::identity(),
        }];
        let voxel = 0.03;
        let trunc = 0.15;
        let mut grid = tsdf_grid([48, 48, 48], Vector3::new(-0.7, -0.7, -0.7), voxel, trunc)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for k in 0..24 {
            let ang = std::f64::consts::TAU * k as f64 / 24.0;
            let eye = Vector3::new(2.0 * ang.cos(), 0.7, 2.0 * ang.sin());
            let cam = forward_camera(128, 96).look_at(eye, Vector3::zeros());
            let frame = render_depth(&scene, &cam, 0.0, &mut rng).unwrap();
            integrate_frame(&mut grid, &frame, trunc).unwrap();
        }
        let pts = surface_points(&grid);
        assert!(pts.len() > 500, "only {} surface points", pts.len());
        let rms = (pts.iter().map(|p| (p.norm() - 0.5).powi(2)).sum::<f64>()
            / pts.len() as f64)
            .sqrt();
        assert!(rms < voxel, "rms radial error {rms}");
    }
}
