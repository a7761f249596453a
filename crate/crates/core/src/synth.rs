//! Synthetic scenes with exact ground truth: parametric objects placed in a
//! room, virtually scanned by an orbiting depth camera, fused into a TSDF
//! volume, with per-object normalized-coordinate crops derived from the
//! poses. A perturbation pass injects controlled noise to stand in for
//! prediction error.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::correspondence::{gt_noc_from_pose, CropMeta, InstanceMask, NocGrid, ObjectCrop};
use crate::error::{Error, Result};
use crate::geometry::{ObbBox, Pose9Dof, VoxelGrid};
use crate::io::vxg;
use crate::shape::{lshape, table_like, Shape};
use crate::symmetry::SymmetryClass;
use crate::tsdf::{
    integrate_frame_serial, render_depth_serial, sample_tsdf, tsdf_grid, CameraSpec, PlacedShape,
    TsdfCell,
};

/// TSDF band (in scan voxels) within which a crop voxel counts as surface.
const SURFACE_BAND_VOXELS: f64 = 0.75;

/// World-distance band (in scan voxels) within which a surface voxel may be
/// claimed by an object.
const ASSIGN_BAND_VOXELS: f64 = 2.0;

/// Accepted normalized-coordinate magnitude for instance assignment; kept
/// inside the ground-truth tolerance band so derivation never aborts.
const CUBE_BAND: f64 = 0.52;

/// One entry of the shape library.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeDef {
    pub id: String,
    pub category: String,
    pub shape: Shape,
    pub symmetry: SymmetryClass,
}

/// Built-in parametric library. Every shape is centered, fits well inside
/// the normalized cube, and carries its rotational symmetry by construction.
pub fn default_library() -> Vec<ShapeDef> {
    let def = |id: &str, category: &str, shape: Shape, symmetry: SymmetryClass| ShapeDef {
        id: id.to_string(),
        category: category.to_string(),
        shape,
        symmetry,
    };
    vec![
        def(
            "cabinet_wide",
            "cabinet",
            Shape::Cuboid {
                half_extents: [0.45, 0.28, 0.2],
            },
            SymmetryClass::TwoFold,
        ),
        def(
            "cabinet_tall",
            "cabinet",
            Shape::Cuboid {
                half_extents: [0.22, 0.45, 0.22],
            },
            SymmetryClass::FourFold,
        ),
        def(
            "cabinet_flat",
            "cabinet",
            Shape::Cuboid {
                half_extents: [0.42, 0.08, 0.3],
            },
            SymmetryClass::TwoFold,
        ),
        def(
            "bin_round",
            "trash_bin",
            Shape::Cylinder {
                radius: 0.28,
                half_height: 0.42,
            },
            SymmetryClass::Infinite,
        ),
        def(
            "bin_squat",
            "trash_bin",
            Shape::Cylinder {
                radius: 0.4,
                half_height: 0.22,
            },
            SymmetryClass::Infinite,
        ),
        def(
            "chair_basic",
            "chair",
            lshape([0.36, 0.07, 0.36], [0.36, 0.26, 0.055]),
            SymmetryClass::None,
        ),
        def(
            "chair_deep",
            "chair",
            lshape([0.4, 0.06, 0.3], [0.4, 0.32, 0.05]),
            SymmetryClass::None,
        ),
        def(
            "table_square",
            "table",
            table_like(0.42, 0.035, 0.045, 0.28),
            SymmetryClass::FourFold,
        ),
        def(
            "ball_large",
            "ball",
            Shape::Sphere { radius: 0.45 },
            SymmetryClass::Infinite,
        ),
        def(
            "ball_small",
            "ball",
            Shape::Sphere { radius: 0.3 },
            SymmetryClass::Infinite,
        ),
    ]
}

/// Upright-rotation sampling preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum RotationPreset {
    /// Yaw uniform in [0, 360).
    Uniform,
    /// Quarter-turn increments with uniform jitter, mirroring upright
    /// augmentation.
    SnapJitter { step_deg: f64, jitter_deg: f64 },
}

impl Default for RotationPreset {
    fn default() -> Self {
        RotationPreset::Uniform
    }
}

/// Orbiting camera ring parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    /// Orbit radius as a multiple of half the larger horizontal room extent.
    pub radius_factor: f64,
    /// Camera height as a fraction of the room height.
    pub height_factor: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            frames: 24,
            width: 160,
            height: 120,
            fov_deg: 70.0,
            radius_factor: 1.5,
            height_factor: 0.85,
        }
    }
}

/// Extra static geometry rendered into the scan but absent from the ground
/// truth (walls, occluders).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClutterSpec {
    pub shape: Shape,
    pub pose: Pose9Dof,
}

/// Full description of a synthetic scene family; deterministic per seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    /// Room extents in meters; x/z centered on the origin, y up from 0.
    pub room_extents: [f64; 3],
    pub objects_min: usize,
    pub objects_max: usize,
    pub scale_range: [f64; 2],
    pub rotation: RotationPreset,
    pub camera: OrbitSpec,
    /// Per-pixel depth noise sigma in meters.
    pub noise_sigma: f64,
    pub voxel_size: f64,
    /// Truncation distance; defaults to 5 voxels when absent.
    pub trunc: Option<f64>,
    pub include_floor: bool,
    pub clutter: Vec<ClutterSpec>,
    pub max_overlap_iou: f64,
    /// Objects observed in fewer surface voxels are dropped from the ground
    /// truth (0 keeps everything that was seen at all).
    pub min_observed_voxels: usize,
    pub crop_dims: usize,
    /// Crop cube edge as a multiple of the largest box extent.
    pub crop_padding: f64,
    pub mask_threshold: f64,
    pub library: Vec<ShapeDef>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            room_extents: [5.0, 2.6, 5.0],
            objects_min: 6,
            objects_max: 10,
            scale_range: [0.5, 2.0],
            rotation: RotationPreset::default(),
            camera: OrbitSpec::default(),
            noise_sigma: 0.0,
            voxel_size: 0.0468,
            trunc: None,
            include_floor: true,
            clutter: Vec::new(),
            max_overlap_iou: 0.3,
            min_observed_voxels: 20,
            crop_dims: 48,
            crop_padding: 1.2,
            mask_threshold: 0.5,
            library: default_library(),
        }
    }
}

impl SceneSpec {
    pub fn trunc(&self) -> f64 {
        self.trunc.unwrap_or(5.0 * self.voxel_size)
    }
}

/// Ground truth for one object of a generated scene.
#[derive(Debug, Clone)]
pub struct SceneObjectGt {
    pub object_id: String,
    pub cad_id: String,
    pub category: String,
    pub pose: Pose9Dof,
    pub symmetry: SymmetryClass,
    pub bbox: ObbBox,
    pub center: Vector3<f64>,
    pub crop: ObjectCrop,
    pub masked_voxels: usize,
}

/// A generated scene: fused scan plus per-object ground truth.
#[derive(Debug, Clone)]
pub struct SceneGroundTruth {
    pub scene_id: String,
    pub seed: u64,
    pub voxel_size: f64,
    pub trunc: f64,
    pub objects: Vec<SceneObjectGt>,
    pub scan: VoxelGrid<TsdfCell>,
}

impl SceneGroundTruth {
    /// Unique CAD ids present in the scene (the per-scene retrieval pool).
    pub fn cad_pool(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.objects.iter().map(|o| o.cad_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

struct PlacedObject {
    def_index: usize,
    placed: PlacedShape,
    bbox: ObbBox,
}

/// Generates a scene deterministically from its spec: sample placements,
/// render the camera orbit, fuse the frames, then derive each object's
/// normalized-coordinate crop from its pose and the fused occupancy.
/// Objects never observed by the virtual scan are dropped from the ground
/// truth. Rendering and fusion run on this thread only; parallelism is
/// intended across scenes.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneGroundTruth> {
    Ok(generate_scene_with_frames(spec)?.0)
}

/// Generates many scenes, one worker per scene. Each scene is internally
/// sequential, so results are identical to calling [`generate_scene`] in a
/// loop.
pub fn generate_scenes(specs: &[SceneSpec]) -> Result<Vec<SceneGroundTruth>> {
    crate::exec::map_indexed(crate::exec::ExecMode::Parallel, specs, |_, s| {
        generate_scene(s)
    })
    .into_iter()
    .collect()
}

/// As [`generate_scene`], also returning the rendered depth frames (for
/// exporting fusion inputs).
pub fn generate_scene_with_frames(
    spec: &SceneSpec,
) -> Result<(SceneGroundTruth, Vec<crate::tsdf::DepthFrame>)> {
    validate_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let objects = place_objects(spec, &mut rng)?;

    // Static geometry: floor slab plus configured clutter.
    let mut render_list: Vec<PlacedShape> = Vec::new();
    let [rx, ry, rz] = spec.room_extents;
    if spec.include_floor {
        render_list.push(PlacedShape {
            shape: Shape::Cuboid {
                half_extents: [rx / 2.0 + 1.0, 0.1, rz / 2.0 + 1.0],
            },
            pose: Pose9Dof::new(
                Vector3::new(0.0, -0.1, 0.0),
                UnitQuaternion::identity(),
                Vector3::from_element(1.0),
            )?,
        });
    }
    for c in &spec.clutter {
        c.shape.validate()?;
        render_list.push(PlacedShape {
            shape: c.shape.clone(),
            pose: c.pose,
        });
    }
    let clutter_count = render_list.len();
    for o in &objects {
        render_list.push(o.placed.clone());
    }

    // Scan volume covering the room plus a truncation pad.
    let trunc = spec.trunc();
    let vs = spec.voxel_size;
    let pad = trunc;
    let lo = Vector3::new(-rx / 2.0 - pad, -pad, -rz / 2.0 - pad);
    let extent = Vector3::new(rx + 2.0 * pad, ry + 2.0 * pad, rz + 2.0 * pad);
    // Epsilon guard: rooms sized for exact grid dims must not gain a voxel
    // to float noise.
    let dims = [
        ((extent.x / vs) - 1e-9).ceil() as usize,
        ((extent.y / vs) - 1e-9).ceil() as usize,
        ((extent.z / vs) - 1e-9).ceil() as usize,
    ];
    let mut scan = tsdf_grid(dims, lo + Vector3::from_element(vs / 2.0), vs, trunc)?;
    let mut frames = Vec::with_capacity(spec.camera.frames);

    // Virtual scanning: orbit ring, all cameras aimed at the room interior.
    let orbit_radius = spec.camera.radius_factor * rx.max(rz) / 2.0;
    let cam_height = spec.camera.height_factor * ry;
    let target = Vector3::new(0.0, 0.3 * ry, 0.0);
    let fx = spec.camera.width as f64 / 2.0 / (spec.camera.fov_deg.to_radians() / 2.0).tan();
    for k in 0..spec.camera.frames {
        let ang = std::f64::consts::TAU * k as f64 / spec.camera.frames as f64;
        let eye = Vector3::new(orbit_radius * ang.cos(), cam_height, orbit_radius * ang.sin());
        let camera = CameraSpec {
            fx,
            fy: fx,
            cx: (spec.camera.width as f64 - 1.0) / 2.0,
            cy: (spec.camera.height as f64 - 1.0) / 2.0,
            width: spec.camera.width,
            height: spec.camera.height,
            cam2world: crate::geometry::RigidTransform::identity(),
        }
        .look_at(eye, target);
        let frame = render_depth_serial(&render_list, &camera, spec.noise_sigma, &mut rng)?;
        integrate_frame_serial(&mut scan, &frame, trunc)?;
        frames.push(frame);
    }

    // Ground-truth crops from fused occupancy.
    let clutter_shapes = &render_list[..clutter_count];
    let mut gt_objects = Vec::new();
    for (i, obj) in objects.iter().enumerate() {
        let def = &spec.library[obj.def_index];
        let crop = build_gt_crop(spec, &scan, obj, def, &objects, clutter_shapes)?;
        let Some((crop, masked)) = crop else {
            continue; // unobserved by the virtual scan
        };
        let object_id = format!("obj_{i:03}");
        gt_objects.push(SceneObjectGt {
            object_id: object_id.clone(),
            cad_id: def.id.clone(),
            category: def.category.clone(),
            pose: obj.placed.pose,
            symmetry: def.symmetry,
            bbox: obj.bbox,
            center: obj.placed.pose.translation(),
            crop: ObjectCrop {
                object_id,
                ..crop
            },
            masked_voxels: masked,
        });
    }

    Ok((
        SceneGroundTruth {
            scene_id: format!("scene_{:05}", spec.seed),
            seed: spec.seed,
            voxel_size: vs,
            trunc,
            objects: gt_objects,
            scan,
        },
        frames,
    ))
}

fn validate_spec(spec: &SceneSpec) -> Result<()> {
    if spec.library.is_empty() {
        return Err(Error::InvalidParameter("shape library is empty".into()));
    }
    for def in &spec.library {
        def.shape.validate()?;
        if !def.shape.fits_unit_cube() {
            return Err(Error::InvalidParameter(format!(
                "library shape {} exceeds the normalized cube",
                def.id
            )));
        }
    }
    if spec.objects_min > spec.objects_max || spec.objects_max == 0 {
        return Err(Error::InvalidParameter(format!(
            "bad object count range [{}, {}]",
            spec.objects_min, spec.objects_max
        )));
    }
    if !(spec.scale_range[0] > 0.0 && spec.scale_range[1] >= spec.scale_range[0]) {
        return Err(Error::InvalidParameter(format!(
            "bad scale range {:?}",
            spec.scale_range
        )));
    }
    if !(spec.voxel_size > 0.0) || spec.crop_dims < 8 {
        return Err(Error::InvalidParameter(
            "voxel size must be positive and crop dims at least 8".into(),
        ));
    }
    Ok(())
}

fn sample_yaw<R: Rng + ?Sized>(preset: &RotationPreset, rng: &mut R) -> f64 {
    match preset {
        RotationPreset::Uniform => rng.gen_range(0.0..360.0),
        RotationPreset::SnapJitter { step_deg, jitter_deg } => {
            let steps = (360.0 / step_deg).round().max(1.0) as u32;
            let base = f64::from(rng.gen_range(0..steps)) * step_deg;
            base + rng.gen_range(-jitter_deg..=*jitter_deg)
        }
    }
}

fn place_objects(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<PlacedObject>> {
    let count = rng.gen_range(spec.objects_min..=spec.objects_max);
    let [rx, ry, rz] = spec.room_extents;
    // Keeps object surfaces clear of the floor band during instance
    // assignment.
    let floor_margin = 0.3;
    let mut placed: Vec<PlacedObject> = Vec::new();
    for _ in 0..count {
        let mut accepted = false;
        for _attempt in 0..200 {
            let def_index = rng.gen_range(0..spec.library.len());
            let def = &spec.library[def_index];
            let [s_lo, s_hi] = spec.scale_range;
            let sx = rng.gen_range(s_lo..=s_hi);
            let sy = rng.gen_range(s_lo..=s_hi);
            // Quarter-turn and continuous symmetry demand equal horizontal
            // scales or the shape loses its class.
            let sz = match def.symmetry {
                SymmetryClass::FourFold | SymmetryClass::Infinite => sx,
                _ => rng.gen_range(s_lo..=s_hi),
            };
            let yaw = sample_yaw(&spec.rotation, rng);
            let rotation =
                UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw.to_radians());
            let probe = PlacedShape {
                shape: def.shape.clone(),
                pose: Pose9Dof::new(Vector3::zeros(), rotation, Vector3::new(sx, sy, sz))?,
            };
            let (aabb_lo, aabb_hi) = probe.world_aabb();
            let half = (aabb_hi - aabb_lo) / 2.0;
            let x_room = rx / 2.0 - half.x - 0.05;
            let z_room = rz / 2.0 - half.z - 0.05;
            let y_lo = floor_margin + half.y;
            let y_hi = ry - half.y - 0.05;
            if x_room <= 0.0 || z_room <= 0.0 || y_lo >= y_hi {
                continue; // too large for the room at this scale
            }
            let center = Vector3::new(
                rng.gen_range(-x_room..=x_room),
                rng.gen_range(y_lo..=y_hi),
                rng.gen_range(-z_room..=z_room),
            );
            let bbox = ObbBox::new(center, 2.0 * half)?;
            if placed
                .iter()
                .any(|p| p.bbox.iou(&bbox) > spec.max_overlap_iou)
            {
                continue;
            }
            placed.push(PlacedObject {
                def_index,
                placed: PlacedShape {
                    shape: def.shape.clone(),
                    pose: Pose9Dof::new(center, rotation, Vector3::new(sx, sy, sz))?,
                },
                bbox,
            });
            accepted = true;
            break;
        }
        if !accepted {
            return Err(Error::PlacementFailed(format!(
                "could not place object {} of {count} within overlap {} in a {rx}x{ry}x{rz} room",
                placed.len() + 1,
                spec.max_overlap_iou
            )));
        }
    }
    Ok(placed)
}

/// Crop derivation: surface voxels of the fused scan, claimed by the
/// nearest surface among objects, floor, and clutter, then converted to
/// normalized coordinates through the pose inverse.
fn build_gt_crop(
    spec: &SceneSpec,
    scan: &VoxelGrid<TsdfCell>,
    obj: &PlacedObject,
    def: &ShapeDef,
    all: &[PlacedObject],
    clutter: &[PlacedShape],
) -> Result<Option<(ObjectCrop, usize)>> {
    let pose = obj.placed.pose;
    let extent = obj.bbox.extents_vec().amax() * spec.crop_padding;
    let bounds = ObbBox::new(pose.translation(), Vector3::from_element(extent))?;
    let n = spec.crop_dims;
    let vs_crop = extent / n as f64;
    let origin = bounds.min_corner() + Vector3::from_element(vs_crop / 2.0);
    let mut occupancy = VoxelGrid::filled([n, n, n], origin, vs_crop, 0u8)?;

    let vs_scan = scan.voxel_size();
    let surf_band = SURFACE_BAND_VOXELS * vs_scan;
    let assign_band = ASSIGN_BAND_VOXELS * vs_scan;

    let world_dist = |p: &Vector3<f64>, placed: &PlacedShape| -> f64 {
        let local = placed.pose.apply_inverse(p);
        placed.shape.surface_distance(&local) * placed.pose.scale().min()
    };

    let mut masked = 0usize;
    for idx in occupancy.indices().collect::<Vec<_>>() {
        let p = occupancy.world_pos(idx);
        let Some(d) = sample_tsdf(scan, &p) else {
            continue;
        };
        if d.abs() > surf_band {
            continue;
        }
        let local = pose.apply_inverse(&p);
        if local.iter().any(|v| v.abs() > CUBE_BAND) {
            continue;
        }
        let own = def.shape.surface_distance(&local) * pose.scale().min();
        if own > assign_band {
            continue;
        }
        // The voxel must be closer to this object's surface than to any
        // other render geometry.
        let mut stolen = false;
        for other in all {
            if std::ptr::eq(other, obj) {
                continue;
            }
            if world_dist(&p, &other.placed) < own {
                stolen = true;
                break;
            }
        }
        if !stolen && spec.include_floor && p.y.abs() < own {
            stolen = true;
        }
        if !stolen {
            for c in clutter {
                if world_dist(&p, c) < own {
                    stolen = true;
                    break;
                }
            }
        }
        if stolen {
            continue;
        }
        *occupancy.get_mut(idx) = 1;
        masked += 1;
    }

    if masked < spec.min_observed_voxels.max(1) {
        return Ok(None);
    }
    let (noc, mut mask) = gt_noc_from_pose(&bounds, &pose, &occupancy)?;
    mask.threshold = spec.mask_threshold;
    Ok(Some((
        ObjectCrop {
            object_id: String::new(), // filled by the caller
            bounds,
            noc,
            mask,
            symmetry: def.symmetry,
            scale: Some(pose.scale()),
            center: pose.translation(),
        },
        masked,
    )))
}

/// Perturbation of ground truth standing in for prediction error:
/// Gaussian noise on masked normalized coordinates (clamped to the cube),
/// Bernoulli mask flips over every crop voxel, and uniform jitter of the
/// detected centers. Deterministic per seed.
#[derive(Debug, Clone, Copy)]
pub struct PerturbParams {
    pub noc_sigma: f64,
    pub mask_flip_p: f64,
    pub center_jitter: f64,
    pub seed: u64,
}

pub fn perturb_gt(gt: &SceneGroundTruth, params: &PerturbParams) -> Result<SceneGroundTruth> {
    if params.noc_sigma < 0.0 || params.center_jitter < 0.0 {
        return Err(Error::InvalidParameter(
            "perturbation magnitudes must be non-negative".into(),
        ));
    }
    if !(0.0..=1.0).contains(&params.mask_flip_p) {
        return Err(Error::InvalidParameter(format!(
            "mask flip probability must lie in [0, 1], got {}",
            params.mask_flip_p
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut out = gt.clone();
    for obj in &mut out.objects {
        if params.noc_sigma > 0.0 {
            let normal = Normal::new(0.0, params.noc_sigma)
                .map_err(|e| Error::InvalidParameter(format!("noise model: {e}")))?;
            let thr = obj.crop.mask.threshold as f32;
            let mask_cells: Vec<bool> = obj
                .crop
                .mask
                .grid
                .cells()
                .iter()
                .map(|&p| p >= thr)
                .collect();
            for (i, cell) in obj.crop.noc.grid.cells_mut().iter_mut().enumerate() {
                if !mask_cells[i] {
                    continue;
                }
                for v in cell.iter_mut() {
                    *v = (f64::from(*v) + normal.sample(&mut rng)).clamp(-0.5, 0.5) as f32;
                }
            }
        }
        if params.mask_flip_p > 0.0 {
            for cell in obj.crop.mask.grid.cells_mut() {
                if rng.gen_bool(params.mask_flip_p) {
                    *cell = 1.0 - *cell;
                }
            }
        }
        if params.center_jitter > 0.0 {
            let j = params.center_jitter;
            let jitter = Vector3::new(
                rng.gen_range(-j..=j),
                rng.gen_range(-j..=j),
                rng.gen_range(-j..=j),
            );
            obj.crop.center += jitter;
            obj.center += jitter;
        }
    }
    Ok(out)
}

// --- Scene directory layout -------------------------------------------------
//
//   <dir>/gt.json             scene + object ground truth
//   <dir>/scan.vxg            fused TSDF volume
//   <dir>/crops/obj_XXX.noc.vxg
//   <dir>/crops/obj_XXX.mask.vxg
//   <dir>/crops/obj_XXX.json  crop sidecar

/// Per-object entry of `gt.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectGtRecord {
    pub object_id: String,
    pub cad_id: String,
    pub category: String,
    pub symmetry: SymmetryClass,
    pub pose: Pose9Dof,
    #[serde(rename = "box")]
    pub bbox: ObbBox,
    pub center: [f64; 3],
    pub masked_voxels: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub seed: u64,
    pub voxel_size: f64,
    pub trunc: f64,
    pub objects: Vec<ObjectGtRecord>,
}

impl SceneRecord {
    pub fn from_gt(gt: &SceneGroundTruth) -> Self {
        SceneRecord {
            scene_id: gt.scene_id.clone(),
            seed: gt.seed,
            voxel_size: gt.voxel_size,
            trunc: gt.trunc,
            objects: gt
                .objects
                .iter()
                .map(|o| ObjectGtRecord {
                    object_id: o.object_id.clone(),
                    cad_id: o.cad_id.clone(),
                    category: o.category.clone(),
                    symmetry: o.symmetry,
                    pose: o.pose,
                    bbox: o.bbox,
                    center: o.center.into(),
                    masked_voxels: o.masked_voxels,
                })
                .collect(),
        }
    }
}

pub fn save_scene(gt: &SceneGroundTruth, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("crops"))?;
    let record = SceneRecord::from_gt(gt);
    serde_json::to_writer_pretty(fs::File::create(dir.join("gt.json"))?, &record)?;
    vxg::write_grid(&dir.join("scan.vxg"), &gt.scan)?;
    for o in &gt.objects {
        let stem = dir.join("crops").join(&o.object_id);
        vxg::write_grid(&stem.with_extension("noc.vxg"), &o.crop.noc.grid)?;
        vxg::write_grid(&stem.with_extension("mask.vxg"), &o.crop.mask.grid)?;
        let meta = CropMeta {
            object_id: o.object_id.clone(),
            bounds: o.crop.bounds,
            symmetry: o.crop.symmetry,
            scale: o.crop.scale.map(Into::into),
            center: o.crop.center.into(),
            mask_threshold: o.crop.mask.threshold,
        };
        serde_json::to_writer_pretty(fs::File::create(stem.with_extension("json"))?, &meta)?;
    }
    Ok(())
}

pub fn load_scene(dir: &Path) -> Result<SceneGroundTruth> {
    let record: SceneRecord =
        serde_json::from_reader(fs::File::open(dir.join("gt.json"))?)?;
    let scan: VoxelGrid<TsdfCell> = vxg::read_grid(&dir.join("scan.vxg"))?;
    let mut objects = Vec::new();
    for o in record.objects {
        let stem = dir.join("crops").join(&o.object_id);
        let noc: VoxelGrid<[f32; 3]> = vxg::read_grid(&stem.with_extension("noc.vxg"))?;
        let mask: VoxelGrid<f32> = vxg::read_grid(&stem.with_extension("mask.vxg"))?;
        let meta: CropMeta =
            serde_json::from_reader(fs::File::open(stem.with_extension("json"))?)?;
        objects.push(SceneObjectGt {
            object_id: o.object_id.clone(),
            cad_id: o.cad_id,
            category: o.category,
            pose: o.pose,
            symmetry: o.symmetry,
            bbox: o.bbox,
            center: Vector3::from(o.center),
            crop: ObjectCrop {
                object_id: o.object_id,
                bounds: meta.bounds,
                noc: NocGrid { grid: noc },
                mask: InstanceMask {
                    grid: mask,
                    threshold: meta.mask_threshold,
                },
                symmetry: meta.symmetry,
                scale: meta.scale.map(Vector3::from),
                center: Vector3::from(meta.center),
            },
            masked_voxels: o.masked_voxels,
        });
    }
    Ok(SceneGroundTruth {
        scene_id: record.scene_id,
        seed: record.seed,
        voxel_size: record.voxel_size,
        trunc: record.trunc,
        objects,
        scan,
    })
}

/// `manifest.json` at the root of a dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub scenes: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene_id: String,
    pub path: PathBuf,
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let manifest = Manifest {
        scenes: entries.to_vec(),
    };
    serde_json::to_writer_pretty(fs::File::create(dir.join("manifest.json"))?, &manifest)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_reader(fs::File::open(
        dir.join("manifest.json"),
    )?)?)
}
