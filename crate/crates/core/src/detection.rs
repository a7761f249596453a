//! Object detection losses on voxel grids, target construction, and heatmap
//! peak extraction.
//!
//! The objectness loss combines a recall-oriented heatmap (sigmoid + binary
//! cross entropy), a precision-oriented heatmap (volume-wide softmax +
//! negative log-likelihood) and an offset-field regression, weighted
//! `2 * recall + 10 * precision + 10 * offset`; the box-extent regression is
//! reported separately. All reductions are sums over voxels, matching the
//! weighting of the components.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{ObbBox, VoxelGrid};

/// Logits are clamped to this magnitude before sigmoid/softmax so losses
/// stay finite and deterministic.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Component weights of the combined objectness loss.
pub const RECALL_WEIGHT: f64 = 2.0;
pub const PRECISION_WEIGHT: f64 = 10.0;
pub const OFFSET_WEIGHT: f64 = 10.0;

/// Training targets derived from ground-truth object placements.
#[derive(Debug, Clone)]
pub struct DetectionTargets {
    /// One voxel per object center set to 1.
    pub center_mask: VoxelGrid<u8>,
    /// Per-voxel offset (in voxel units) to the nearest object center.
    pub offset: VoxelGrid<[f32; 3]>,
    /// Box extents (meters) keyed by the center's linear cell index.
    pub box_extents: Vec<(usize, [f32; 3])>,
}

/// Per-voxel network outputs the losses consume.
#[derive(Debug, Clone)]
pub struct DetectionPrediction {
    pub recall_logits: VoxelGrid<f32>,
    pub precision_logits: VoxelGrid<f32>,
    pub offset: VoxelGrid<[f32; 3]>,
    pub box_extents: VoxelGrid<[f32; 3]>,
}

/// Loss components plus the weighted total.
#[derive(Debug, Clone, Copy)]
pub struct DetectionLoss {
    pub recall: f64,
    pub precision: f64,
    pub offset: f64,
    /// Box-extent regression, reported separately from the weighted total.
    pub bbox: f64,
    pub total: f64,
}

/// A peak extracted from an objectness probability grid.
#[derive(Debug, Clone)]
pub struct Detection {
    pub grid_index: [usize; 3],
    pub center_world: Vector3<f64>,
    pub bbox: ObbBox,
    pub score: f64,
}

/// Builds center mask, offset field, and per-center box extents for a set
/// of `(center, extents)` objects on the given grid geometry.
pub fn detection_targets(
    dims: [usize; 3],
    origin: Vector3<f64>,
    voxel_size: f64,
    objects: &[(Vector3<f64>, Vector3<f64>)],
) -> Result<DetectionTargets> {
    let mut center_mask = VoxelGrid::filled(dims, origin, voxel_size, 0u8)?;
    let mut offset = VoxelGrid::filled(dims, origin, voxel_size, [0.0f32; 3])?;
    let mut centers_vox: Vec<Vector3<f64>> = Vec::new();
    let mut box_extents = Vec::new();
    for (center, extents) in objects {
        let idx = center_mask.index_of(center).ok_or_else(|| {
            Error::InvalidParameter(format!("object center {center:?} outside the grid"))
        })?;
        *center_mask.get_mut(idx) = 1;
        let lin = center_mask.linear_index(idx);
        box_extents.push((lin, [extents.x as f32, extents.y as f32, extents.z as f32]));
        centers_vox.push(Vector3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64));
    }
    if !centers_vox.is_empty() {
        for idx in offset.indices().collect::<Vec<_>>() {
            let v = Vector3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64);
            let mut best = Vector3::zeros();
            let mut best_d = f64::INFINITY;
            for c in &centers_vox {
                let d = (c - v).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c - v;
                }
            }
            *offset.get_mut(idx) = [best.x as f32, best.y as f32, best.z as f32];
        }
    }
    Ok(DetectionTargets {
        center_mask,
        offset,
        box_extents,
    })
}

fn check_dims<A, B>(a: &VoxelGrid<A>, b: &VoxelGrid<B>, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Sum over voxels of `BCE(sigmoid(logit), target)`.
pub fn loss_recall(recall_logits: &VoxelGrid<f32>, center_mask: &VoxelGrid<u8>) -> Result<f64> {
    check_dims(recall_logits, center_mask, "recall loss grids")?;
    let mut acc = 0.0;
    for (l, t) in recall_logits.cells().iter().zip(center_mask.cells()) {
        let x = f64::from(*l).clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        let y = f64::from(*t);
        // Stable form of -[y ln sigmoid(x) + (1-y) ln(1 - sigmoid(x))].
        acc += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
    }
    Ok(acc)
}

/// Negative log-likelihood of the positive voxels under a softmax over the
/// whole volume. Errors when the target has no positive voxel.
pub fn loss_precision(
    precision_logits: &VoxelGrid<f32>,
    center_mask: &VoxelGrid<u8>,
) -> Result<f64> {
    check_dims(precision_logits, center_mask, "precision loss grids")?;
    if !center_mask.cells().iter().any(|&t| t > 0) {
        return Err(Error::InvalidParameter(
            "precision loss requires at least one positive voxel".into(),
        ));
    }
    let mut max_logit = f64::NEG_INFINITY;
    for l in precision_logits.cells() {
        max_logit = max_logit.max(f64::from(*l).clamp(-LOGIT_CLAMP, LOGIT_CLAMP));
    }
    let mut sum = 0.0;
    for l in precision_logits.cells() {
        sum += (f64::from(*l).clamp(-LOGIT_CLAMP, LOGIT_CLAMP) - max_logit).exp();
    }
    let log_z = max_logit + sum.ln();
    let mut acc = 0.0;
    for (l, t) in precision_logits.cells().iter().zip(center_mask.cells()) {
        if *t > 0 {
            acc += log_z - f64::from(*l).clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        }
    }
    Ok(acc)
}

/// Sum of squared offset differences (voxel units) over supported voxels;
/// `support = None` sums over the whole grid.
pub fn loss_offset(
    offset: &VoxelGrid<[f32; 3]>,
    offset_gt: &VoxelGrid<[f32; 3]>,
    support: Option<&VoxelGrid<u8>>,
) -> Result<f64> {
    check_dims(offset, offset_gt, "offset loss grids")?;
    if let Some(s) = support {
        check_dims(offset, s, "offset support mask")?;
    }
    let mut acc = 0.0;
    for (i, (o, g)) in offset.cells().iter().zip(offset_gt.cells()).enumerate() {
        if let Some(s) = support {
            if s.cells()[i] == 0 {
                continue;
            }
        }
        for k in 0..3 {
            acc += (f64::from(o[k]) - f64::from(g[k])).powi(2);
        }
    }
    Ok(acc)
}

/// Squared error of predicted box extents at the ground-truth center voxels.
pub fn loss_bbox(box_extents: &VoxelGrid<[f32; 3]>, targets: &[(usize, [f32; 3])]) -> Result<f64> {
    let mut acc = 0.0;
    for (lin, gt) in targets {
        let pred = box_extents
            .cells()
            .get(*lin)
            .ok_or_else(|| Error::InvalidParameter(format!("center index {lin} out of grid")))?;
        for k in 0..3 {
            acc += (f64::from(pred[k]) - f64::from(gt[k])).powi(2);
        }
    }
    Ok(acc)
}

/// Weighted objectness total `2*recall + 10*precision + 10*offset`, with the
/// box regression carried alongside.
pub fn loss_detection_total(
    pred: &DetectionPrediction,
    targets: &DetectionTargets,
) -> Result<DetectionLoss> {
    let recall = loss_recall(&pred.recall_logits, &targets.center_mask)?;
    let precision = loss_precision(&pred.precision_logits, &targets.center_mask)?;
    let offset = loss_offset(&pred.offset, &targets.offset, None)?;
    let bbox = loss_bbox(&pred.box_extents, &targets.box_extents)?;
    Ok(DetectionLoss {
        recall,
        precision,
        offset,
        bbox,
        total: RECALL_WEIGHT * recall + PRECISION_WEIGHT * precision + OFFSET_WEIGHT * offset,
    })
}

/// Extracts local maxima above `min_prob` from a probability grid and
/// greedily suppresses weaker peaks within `nms_radius_vox` (Euclidean,
/// voxel units). Each detection carries the box extents read at its voxel.
pub fn extract_detections(
    prob: &VoxelGrid<f32>,
    box_extents: &VoxelGrid<[f32; 3]>,
    min_prob: f64,
    nms_radius_vox: f64,
) -> Result<Vec<Detection>> {
    check_dims(prob, box_extents, "detection grids")?;
    if !(min_prob > 0.0 && min_prob < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "min_prob must lie in (0, 1), got {min_prob}"
        )));
    }
    if nms_radius_vox < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "nms radius must be at least 1 voxel, got {nms_radius_vox}"
        )));
    }
    let dims = prob.dims();
    let mut peaks: Vec<([usize; 3], f64)> = Vec::new();
    'voxels: for idx in prob.indices() {
        let v = f64::from(*prob.get(idx));
        if v <= min_prob {
            continue;
        }
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let n = [idx[0] as i64 + dx, idx[1] as i64 + dy, idx[2] as i64 + dz];
                    if n.iter().zip(dims.iter()).any(|(&i, &d)| i < 0 || i >= d as i64) {
                        continue;
                    }
                    let nv = f64::from(*prob.get([n[0] as usize, n[1] as usize, n[2] as usize]));
                    if nv > v {
                        continue 'voxels;
                    }
                }
            }
        }
        peaks.push((idx, v));
    }
    // Highest score first; ties broken by linear index for determinism.
    peaks.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| prob.linear_index(a.0).cmp(&prob.linear_index(b.0)))
    });
    let r2 = nms_radius_vox * nms_radius_vox;
    let mut kept: Vec<([usize; 3], f64)> = Vec::new();
    'peaks: for (idx, v) in peaks {
        for (k, _) in &kept {
            let d2: f64 = (0..3).map(|a| (idx[a] as f64 - k[a] as f64).powi(2)).sum();
            if d2 <= r2 {
                continue 'peaks;
            }
        }
        kept.push((idx, v));
    }
    kept.into_iter()
        .map(|(idx, score)| {
            let ext = *box_extents.get(idx);
            let extents = Vector3::new(
                f64::from(ext[0]).max(1e-6),
                f64::from(ext[1]).max(1e-6),
                f64::from(ext[2]).max(1e-6),
            );
            Ok(Detection {
                grid_index: idx,
                center_world: prob.world_pos(idx),
                bbox: ObbBox::new(prob.world_pos(idx), extents)?,
                score,
            })
        })
        .collect()
}
