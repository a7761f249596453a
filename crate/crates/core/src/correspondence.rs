//! Normalized object coordinates, instance masks, object crops, per-object
//! 9DoF alignment, and a RANSAC similarity baseline.
//!
//! A crop is a cubic grid around a detected object. Each masked voxel pairs
//! its world position (scan side) with a normalized CAD coordinate (model
//! side); multiplying the coordinates by the object's per-axis scale turns
//! them metric, after which the Procrustes solver recovers the rotation and
//! the masked centroids pin the translation.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ObbBox, Pose9Dof, VoxelGrid};
use crate::procrustes::{solve_rotation, solve_similarity, CorrespondenceSet, SimilarityTransform};
use crate::symmetry::SymmetryClass;

/// Normalized-coordinate band accepted when deriving ground truth; voxels
/// mapping outside it indicate an inconsistent pose.
pub const NOC_TOLERANCE_BAND: f64 = 0.55;

/// Default mask probability threshold.
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Dense map from crop voxels into the normalized CAD cube `[-0.5, 0.5]^3`.
/// Off-mask voxels hold zeros and are ignored.
#[derive(Debug, Clone)]
pub struct NocGrid {
    pub grid: VoxelGrid<[f32; 3]>,
}

/// Per-voxel instance probability in `[0, 1]` with its decision threshold.
#[derive(Debug, Clone)]
pub struct InstanceMask {
    pub grid: VoxelGrid<f32>,
    pub threshold: f64,
}

impl InstanceMask {
    /// Indices of voxels at or above the threshold.
    pub fn active_cells(&self) -> impl Iterator<Item = usize> + '_ {
        let thr = self.threshold as f32;
        self.grid
            .cells()
            .iter()
            .enumerate()
            .filter(move |(_, &p)| p >= thr)
            .map(|(i, _)| i)
    }

    pub fn active_count(&self) -> usize {
        self.active_cells().count()
    }
}

/// Everything known about one detected object region.
#[derive(Debug, Clone)]
pub struct ObjectCrop {
    pub object_id: String,
    pub bounds: ObbBox,
    pub noc: NocGrid,
    pub mask: InstanceMask,
    pub symmetry: SymmetryClass,
    /// Per-axis scale if regressed/known; estimated from the
    /// correspondences when absent.
    pub scale: Option<Vector3<f64>>,
    /// Detected object center (world), kept as a diagnostic alternative to
    /// masked-centroid translation.
    pub center: Vector3<f64>,
}

/// Sidecar metadata stored next to the NOC/mask grids of a crop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CropMeta {
    pub object_id: String,
    #[serde(rename = "box")]
    pub bounds: ObbBox,
    pub symmetry: SymmetryClass,
    pub scale: Option<[f64; 3]>,
    pub center: [f64; 3],
    pub mask_threshold: f64,
}

/// Derives ground-truth normalized coordinates and an instance mask for the
/// occupied voxels of a crop.
///
/// Every occupied voxel's world position is pushed through the inverse
/// pose; results must land inside the `[-0.55, 0.55]^3` tolerance band
/// (else [`Error::InconsistentPose`]) and are clamped to the unit cube.
pub fn gt_noc_from_pose(
    crop_box: &ObbBox,
    object_pose: &Pose9Dof,
    occupancy: &VoxelGrid<u8>,
) -> Result<(NocGrid, InstanceMask)> {
    let span = occupancy.span();
    let extents = crop_box.extents_vec();
    let vs = occupancy.voxel_size();
    for k in 0..3 {
        if (span[k] - extents[k]).abs() > vs {
            return Err(Error::DimensionMismatch(format!(
                "occupancy grid span {span:?} does not cover the crop box extents {extents:?}"
            )));
        }
    }
    let mut noc = occupancy.map_cells(|_| [0.0f32; 3]);
    let mut mask = occupancy.map_cells(|_| 0.0f32);
    for idx in occupancy.indices().collect::<Vec<_>>() {
        if *occupancy.get(idx) == 0 {
            continue;
        }
        let world = occupancy.world_pos(idx);
        let local = object_pose.apply_inverse(&world);
        if local.iter().any(|v| v.abs() > NOC_TOLERANCE_BAND) {
            return Err(Error::InconsistentPose(local.x, local.y, local.z));
        }
        let clamped = [
            local.x.clamp(-0.5, 0.5) as f32,
            local.y.clamp(-0.5, 0.5) as f32,
            local.z.clamp(-0.5, 0.5) as f32,
        ];
        *noc.get_mut(idx) = clamped;
        *mask.get_mut(idx) = 1.0;
    }
    Ok((
        NocGrid { grid: noc },
        InstanceMask {
            grid: mask,
            threshold: DEFAULT_MASK_THRESHOLD,
        },
    ))
}

/// Masked `(noc, world, weight)` triples of a crop.
fn masked_pairs(crop: &ObjectCrop) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>, Vec<f64>) {
    let mut nocs = Vec::new();
    let mut worlds = Vec::new();
    let mut weights = Vec::new();
    let thr = crop.mask.threshold as f32;
    let grid = &crop.mask.grid;
    for (i, &p) in grid.cells().iter().enumerate() {
        if p < thr {
            continue;
        }
        let idx = grid.index_3d(i);
        let n = crop.noc.grid.get(idx);
        nocs.push(Vector3::new(
            f64::from(n[0]),
            f64::from(n[1]),
            f64::from(n[2]),
        ));
        worlds.push(grid.world_pos(idx));
        weights.push(f64::from(p));
    }
    (nocs, worlds, weights)
}

/// The scale used for alignment: the provided one, or a least-squares
/// estimate from the correspondences.
pub fn resolve_scale(crop: &ObjectCrop) -> Result<Vector3<f64>> {
    if let Some(s) = crop.scale {
        return Ok(s);
    }
    let (nocs, worlds, weights) = masked_pairs(crop);
    if nocs.len() < 3 {
        return Err(Error::TooFewMasked(nocs.len()));
    }
    estimate_scale(&nocs, &worlds, &weights)
}

/// Least-squares per-axis scale from normalized coordinates and world
/// points, without a known rotation.
///
/// With exact data `Y = R S X` (centered), the cross-covariance
/// `C = sum w y x'` and the CAD autocovariance `A = sum w x x'` satisfy
/// `C A^-1 = R S`, so the polar decomposition recovers both factors. The
/// diagonal of the symmetric factor seeds per-axis refinement in the
/// rotated frame, which also handles noisy or planar data.
pub fn estimate_scale(
    nocs: &[Vector3<f64>],
    worlds: &[Vector3<f64>],
    weights: &[f64],
) -> Result<Vector3<f64>> {
    let w_sum: f64 = weights.iter().sum();
    if w_sum <= 0.0 {
        return Err(Error::InvalidParameter("weights must not all be zero".into()));
    }
    let mut c_noc = Vector3::zeros();
    let mut c_world = Vector3::zeros();
    for i in 0..nocs.len() {
        c_noc += weights[i] * nocs[i];
        c_world += weights[i] * worlds[i];
    }
    c_noc /= w_sum;
    c_world /= w_sum;

    let mut cross = Matrix3::zeros();
    let mut auto = Matrix3::zeros();
    for i in 0..nocs.len() {
        let x = nocs[i] - c_noc;
        let y = worlds[i] - c_world;
        cross += weights[i] * y * x.transpose();
        auto += weights[i] * x * x.transpose();
    }

    let mut scale = Vector3::from_element(1.0);
    if let Some(auto_inv) = auto.try_inverse() {
        let m = cross * auto_inv;
        let svd = nalgebra::SVD::new(m, true, true);
        if let (Some(u), Some(vt)) = (svd.u, svd.v_t) {
            let d = (u * vt).determinant().signum();
            let rot = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * vt;
            let sym = rot.transpose() * m;
            for k in 0..3 {
                scale[k] = sym[(k, k)].clamp(1e-3, 1e3);
            }
        }
    } else {
        // Planar/degenerate autocovariance: start from the uniform
        // similarity fit.
        let c = CorrespondenceSet::new(nocs.to_vec(), worlds.to_vec(), weights.to_vec())?;
        let sim = solve_similarity(&c)?;
        scale = Vector3::from_element(sim.scale.clamp(1e-3, 1e3));
    }

    // Refine: rotation with the current scale, then per-axis least squares
    // in the rotated frame.
    for _ in 0..3 {
        let p_cad: Vec<Vector3<f64>> = nocs.iter().map(|n| scale.component_mul(n)).collect();
        let c = CorrespondenceSet::new(p_cad, worlds.to_vec(), weights.to_vec())?;
        let sol = solve_rotation(&c)?;
        let rot_t = sol.rotation.transpose();
        let mut num: Vector3<f64> = Vector3::zeros();
        let mut den: Vector3<f64> = Vector3::zeros();
        for i in 0..nocs.len() {
            let x = nocs[i] - c_noc;
            let y = rot_t * (worlds[i] - c_world);
            for k in 0..3 {
                num[k] += weights[i] * y[k] * x[k];
                den[k] += weights[i] * x[k] * x[k];
            }
        }
        for k in 0..3 {
            if den[k] > 1e-12 {
                scale[k] = (num[k] / den[k]).clamp(1e-3, 1e3);
            }
        }
    }
    Ok(scale)
}

/// Assembles metric correspondences from the masked voxels of a crop:
/// CAD side = normalized coordinates times scale, scan side = voxel world
/// positions, weights = mask probabilities.
pub fn build_correspondences(crop: &ObjectCrop) -> Result<CorrespondenceSet> {
    let scale = resolve_scale(crop)?;
    build_correspondences_with_scale(crop, &scale)
}

fn build_correspondences_with_scale(
    crop: &ObjectCrop,
    scale: &Vector3<f64>,
) -> Result<CorrespondenceSet> {
    let (nocs, worlds, weights) = masked_pairs(crop);
    if nocs.len() < 3 {
        return Err(Error::TooFewMasked(nocs.len()));
    }
    let p_cad: Vec<Vector3<f64>> = nocs.iter().map(|n| scale.component_mul(n)).collect();
    CorrespondenceSet::new(p_cad, worlds, weights)
}

/// How the translation of an aligned object is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TranslationMode {
    /// Match the transformed CAD centroid to the masked scan centroid
    /// (default; exact for consistent correspondences).
    #[default]
    CentroidMatch,
    /// Use the detected object center carried by the crop.
    DetectedCenter,
}

/// Full 9DoF alignment of one crop: Procrustes rotation, provided or
/// estimated scale, translation from centroid matching (or the detected
/// center).
pub fn align_object(crop: &ObjectCrop) -> Result<Pose9Dof> {
    align_object_with(crop, TranslationMode::CentroidMatch)
}

pub fn align_object_with(crop: &ObjectCrop, translation: TranslationMode) -> Result<Pose9Dof> {
    let scale = resolve_scale(crop)?;
    let corr = build_correspondences_with_scale(crop, &scale)?;
    let sol = solve_rotation(&corr)?;
    let t = match translation {
        TranslationMode::CentroidMatch => sol.centroid_scan - sol.rotation * sol.centroid_cad,
        TranslationMode::DetectedCenter => crop.center,
    };
    Pose9Dof::new(t, UnitQuaternion::from_matrix(&sol.rotation), scale)
}

/// RANSAC similarity alignment from minimal 3-point samples.
///
/// Each iteration fits a similarity to a random minimal sample, scores it by
/// the number of points within `inlier_eps` (meters), and the best
/// hypothesis is refit on its inliers. Deterministic given the RNG.
pub fn ransac_align<R: Rng + ?Sized>(
    c: &CorrespondenceSet,
    iters: usize,
    inlier_eps: f64,
    rng: &mut R,
) -> Result<(Pose9Dof, usize)> {
    if iters == 0 {
        return Err(Error::InvalidParameter("ransac needs at least 1 iteration".into()));
    }
    if !(inlier_eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "inlier epsilon must be positive, got {inlier_eps}"
        )));
    }
    let n = c.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }

    let count_inliers = |sim: &SimilarityTransform| -> Vec<usize> {
        (0..n)
            .filter(|&i| (sim.apply(&c.p_cad()[i]) - c.p_scan()[i]).norm() < inlier_eps)
            .collect()
    };

    let mut best_inliers: Vec<usize> = Vec::new();
    for _ in 0..iters {
        let mut sample = [0usize; 3];
        sample[0] = rng.gen_range(0..n);
        loop {
            sample[1] = rng.gen_range(0..n);
            if sample[1] != sample[0] {
                break;
            }
        }
        loop {
            sample[2] = rng.gen_range(0..n);
            if sample[2] != sample[0] && sample[2] != sample[1] {
                break;
            }
        }
        let minimal = c.subset(&sample)?;
        let sim = match solve_similarity(&minimal) {
            Ok(s) => s,
            Err(_) => continue, // degenerate sample
        };
        let inliers = count_inliers(&sim);
        if inliers.len() > best_inliers.len() {
            best_inliers = inliers;
        }
    }
    if best_inliers.len() < 3 {
        return Err(Error::NoConsensus(best_inliers.len()));
    }
    let refit = solve_similarity(&c.subset(&best_inliers)?)?;
    let final_inliers = count_inliers(&refit).len();
    let pose = Pose9Dof::new(
        refit.translation,
        UnitQuaternion::from_matrix(&refit.rotation),
        Vector3::from_element(refit.scale.max(1e-6)),
    )?;
    Ok((pose, final_inliers))
}

/// Values at masked voxels, ready for the symmetry-aware losses.
pub fn masked_noc_values(noc: &NocGrid, mask: &InstanceMask) -> Vec<Vector3<f64>> {
    mask.active_cells()
        .map(|i| {
            let v = noc.grid.cells()[i];
            Vector3::new(f64::from(v[0]), f64::from(v[1]), f64::from(v[2]))
        })
        .collect()
}
