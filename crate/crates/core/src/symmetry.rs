//! Rotational symmetry classes about the object up-axis (+y), their
//! generated transform groups, and symmetry-aware losses/errors.
//!
//! Wherever a prediction is compared to ground truth, the error is the
//! minimum over the ground truth composed with every group element, so that
//! indistinguishable orientations of a symmetric object are not penalized.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle_deg, rotation_y_deg};

/// Discretization step (degrees) for the infinite class in evaluation
/// metrics. The resulting error floor of step/2 is far below the 20-degree
/// acceptance threshold.
pub const INFINITE_EVAL_STEP_DEG: f64 = 1.0;

/// Coarser default step for loss minimization, where the group is scanned
/// per voxel set.
pub const INFINITE_LOSS_STEP_DEG: f64 = 15.0;

/// Rotational symmetry about the CAD up-axis (+y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    None,
    TwoFold,
    FourFold,
    Infinite,
}

impl SymmetryClass {
    pub const ALL: [SymmetryClass; 4] = [
        SymmetryClass::None,
        SymmetryClass::TwoFold,
        SymmetryClass::FourFold,
        SymmetryClass::Infinite,
    ];
}

/// The discrete rotation group generated by a symmetry class.
///
/// `step_deg` only applies to [`SymmetryClass::Infinite`]; it must divide
/// 360 and be at most 15 degrees.
pub fn symmetry_group(s: SymmetryClass, step_deg: f64) -> Result<Vec<Matrix3<f64>>> {
    let angles: Vec<f64> = match s {
        SymmetryClass::None => vec![0.0],
        SymmetryClass::TwoFold => vec![0.0, 180.0],
        SymmetryClass::FourFold => vec![0.0, 90.0, 180.0, 270.0],
        SymmetryClass::Infinite => {
            if !(step_deg > 0.0) || step_deg > 15.0 {
                return Err(Error::InvalidParameter(format!(
                    "infinite symmetry step must be in (0, 15] degrees, got {step_deg}"
                )));
            }
            let count = 360.0 / step_deg;
            if (count - count.round()).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "infinite symmetry step {step_deg} does not divide 360"
                )));
            }
            (0..count.round() as usize)
                .map(|k| k as f64 * step_deg)
                .collect()
        }
    };
    Ok(angles.into_iter().map(rotation_y_deg).collect())
}

/// Smallest geodesic angle between the prediction and any symmetric variant
/// of the ground truth: `min_g angle(R_pred, R_gt * g)`.
pub fn sym_rotation_error_deg(
    r_pred: &Matrix3<f64>,
    r_gt: &Matrix3<f64>,
    s: SymmetryClass,
) -> f64 {
    sym_rotation_error_deg_with_step(r_pred, r_gt, s, INFINITE_EVAL_STEP_DEG)
}

pub fn sym_rotation_error_deg_with_step(
    r_pred: &Matrix3<f64>,
    r_gt: &Matrix3<f64>,
    s: SymmetryClass,
    step_deg: f64,
) -> f64 {
    let group = symmetry_group(s, step_deg).expect("valid step");
    group
        .iter()
        .map(|g| rotation_angle_deg(r_pred, &(r_gt * g)))
        .fold(f64::INFINITY, f64::min)
}

/// Symmetry-aware mean squared error between two masked coordinate sets:
/// `min_g sum_x ||pred(x) - g * gt(x)||^2 / count`.
pub fn sym_noc_loss(
    noc_pred: &[Vector3<f64>],
    noc_gt: &[Vector3<f64>],
    s: SymmetryClass,
) -> Result<f64> {
    sym_noc_loss_with_step(noc_pred, noc_gt, s, INFINITE_LOSS_STEP_DEG)
}

pub fn sym_noc_loss_with_step(
    noc_pred: &[Vector3<f64>],
    noc_gt: &[Vector3<f64>],
    s: SymmetryClass,
    step_deg: f64,
) -> Result<f64> {
    if noc_pred.len() != noc_gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "masked voxel counts disagree: {} vs {}",
            noc_pred.len(),
            noc_gt.len()
        )));
    }
    if noc_pred.is_empty() {
        return Err(Error::InvalidParameter("empty mask".into()));
    }
    let group = symmetry_group(s, step_deg)?;
    let n = noc_pred.len() as f64;
    let mut best = f64::INFINITY;
    for g in &group {
        let mut acc = 0.0;
        for (p, q) in noc_pred.iter().zip(noc_gt) {
            acc += (p - g * q).norm_squared();
        }
        best = best.min(acc / n);
    }
    Ok(best)
}
