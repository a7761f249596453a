//! 9DoF poses (per-axis scale, rotation, translation) and rigid transforms.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid transform (rotation + translation), used for camera extrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidJson", into = "RigidJson")]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

/// A 9DoF transform: per-axis scale, then rotation, then translation.
///
/// `apply(p) = R * diag(scale) * p + t`. This is the map from a CAD model's
/// normalized coordinates into world space: coordinates are scaled to metric
/// size, rotated, then placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseJson", into = "PoseJson")]
pub struct Pose9Dof {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
    scale: Vector3<f64>,
}

/// Off-diagonal tolerance when deciding whether a conjugated scale matrix is
/// still diagonal (i.e. whether a composed/inverted map stays a pose).
const DIAG_EPS: f64 = 1e-9;

impl Pose9Dof {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
            scale: Vector3::new(1.0, 1.0, 1.0),
        }
    }

    /// All scale components must be positive and finite.
    pub fn new(
        translation: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        scale: Vector3<f64>,
    ) -> Result<Self> {
        if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale components must be positive, got {:?}",
                scale
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(
                "translation must be finite".into(),
            ));
        }
        Ok(Self {
            translation,
            rotation,
            scale,
        })
    }

    pub fn from_parts(
        translation: Vector3<f64>,
        rotation: Matrix3<f64>,
        scale: Vector3<f64>,
    ) -> Result<Self> {
        if !super::is_rotation_matrix(&rotation, 1e-6) {
            return Err(Error::InvalidParameter(
                "rotation matrix is not orthonormal with det +1".into(),
            ));
        }
        let q = UnitQuaternion::from_matrix(&rotation);
        Self::new(translation, q, scale)
    }

    pub fn rigid(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation,
            scale: Vector3::new(1.0, 1.0, 1.0),
        }
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.scale
    }

    pub fn is_uniform_scale(&self) -> bool {
        let s = self.scale;
        let m = s.x.max(s.y).max(s.z);
        (s.x - s.y).abs() <= DIAG_EPS * m && (s.x - s.z).abs() <= DIAG_EPS * m
    }

    /// `R * diag(s) * p + t`.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * self.scale.component_mul(p) + self.translation
    }

    /// Exact inverse map `diag(s)^-1 * R' * (p - t)`, defined for every pose.
    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.rotation.inverse() * (p - self.translation)).component_div(&self.scale)
    }

    /// Inverse of the linear part applied to a direction (no translation).
    pub fn apply_inverse_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        (self.rotation.inverse() * v).component_div(&self.scale)
    }

    /// Composition `self ∘ other` (apply `other` first).
    ///
    /// The combined linear map `Ra Sa Rb Sb` is a pose again only when
    /// `Rb' Sa Rb` is diagonal — in particular when `self` has uniform scale
    /// or `other` has identity rotation. Otherwise the anisotropic scale
    /// shears and the operation reports an error.
    pub fn compose(&self, other: &Pose9Dof) -> Result<Pose9Dof> {
        let rb = other.rotation_matrix();
        let k = conjugated_diagonal(&rb.transpose(), &self.scale).ok_or_else(|| {
            Error::UnrepresentablePose(
                "composition of anisotropic scale with this rotation shears; \
                 requires uniform outer scale or identity inner rotation"
                    .into(),
            )
        })?;
        Pose9Dof::new(
            self.apply(&other.translation),
            self.rotation * other.rotation,
            k.component_mul(&other.scale),
        )
    }

    /// Inverse as a pose. Defined when `R diag(s)^-1 R'` is diagonal
    /// (uniform scale, identity rotation, or an axis-permuting rotation).
    pub fn inverse(&self) -> Result<Pose9Dof> {
        let r = self.rotation_matrix();
        let inv_scale = Vector3::new(1.0 / self.scale.x, 1.0 / self.scale.y, 1.0 / self.scale.z);
        let k = conjugated_diagonal(&r, &inv_scale).ok_or_else(|| {
            Error::UnrepresentablePose(
                "inverse of an anisotropically scaled pose is not a pose for this rotation"
                    .into(),
            )
        })?;
        let rot_inv = self.rotation.inverse();
        let t = -(rot_inv * self.translation).component_div(&self.scale);
        Pose9Dof::new(t, rot_inv, k)
    }
}

/// `Q diag(s) Q'` if it is diagonal within tolerance, as a vector.
fn conjugated_diagonal(q: &Matrix3<f64>, s: &Vector3<f64>) -> Option<Vector3<f64>> {
    let m = q * Matrix3::from_diagonal(s) * q.transpose();
    let scale_mag = s.amax();
    for i in 0..3 {
        for j in 0..3 {
            if i != j && m[(i, j)].abs() > DIAG_EPS * scale_mag.max(1.0) {
                return None;
            }
        }
    }
    Some(Vector3::new(m[(0, 0)], m[(1, 1)], m[(2, 2)]))
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    t: [f64; 3],
    /// Quaternion in w, x, y, z order.
    q: [f64; 4],
    s: [f64; 3],
}

impl From<Pose9Dof> for PoseJson {
    fn from(p: Pose9Dof) -> Self {
        let q = p.rotation.quaternion();
        PoseJson {
            t: p.translation.into(),
            q: [q.w, q.i, q.j, q.k],
            s: p.scale.into(),
        }
    }
}

impl TryFrom<PoseJson> for Pose9Dof {
    type Error = Error;

    fn try_from(j: PoseJson) -> Result<Self> {
        let q = Quaternion::new(j.q[0], j.q[1], j.q[2], j.q[3]);
        if q.norm() < 1e-9 {
            return Err(Error::Format("pose quaternion has near-zero norm".into()));
        }
        Pose9Dof::new(
            Vector3::from(j.t),
            UnitQuaternion::from_quaternion(q),
            Vector3::from(j.s),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct RigidJson {
    t: [f64; 3],
    q: [f64; 4],
}

impl From<RigidTransform> for RigidJson {
    fn from(p: RigidTransform) -> Self {
        let q = p.rotation.quaternion();
        RigidJson {
            t: p.translation.into(),
            q: [q.w, q.i, q.j, q.k],
        }
    }
}

impl TryFrom<RigidJson> for RigidTransform {
    type Error = Error;

    fn try_from(j: RigidJson) -> Result<Self> {
        let q = Quaternion::new(j.q[0], j.q[1], j.q[2], j.q[3]);
        if q.norm() < 1e-9 {
            return Err(Error::Format("quaternion has near-zero norm".into()));
        }
        Ok(RigidTransform::new(
            UnitQuaternion::from_quaternion(q),
            Vector3::from(j.t),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, rotation_y_deg};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose<R: Rng>(rng: &mut R, uniform_scale: bool) -> Pose9Dof {
        let t = Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let q = random_rotation(rng);
        let s = if uniform_scale {
            Vector3::from_element(rng.gen_range(0.5..2.0))
        } else {
            Vector3::new(
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
            )
        };
        Pose9Dof::new(t, q, s).unwrap()
    }

    #[test]
    fn identity_apply_is_identity() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose9Dof::identity().apply(&p), p);
    }

    #[test]
    fn pure_scale_doubles() {
        let pose = Pose9Dof::new(
            Vector3::zeros(),
            UnitQuaternion::identity(),
            Vector3::new(2.0, 2.0, 2.0),
        )
        .unwrap();
        assert_eq!(
            pose.apply(&Vector3::new(1.0, 0.0, 0.0)),
            Vector3::new(2.0, 0.0, 0.0)
        );
    }

    #[test]
    fn rotate_then_translate_hand_computed() {
        // Rz(90°) maps (1,0,0) to (0,1,0); translation adds (1,0,0).
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 90f64.to_radians());
        let pose = Pose9Dof::new(Vector3::new(1.0, 0.0, 0.0), rz, Vector3::from_element(1.0))
            .unwrap();
        let out = pose.apply(&Vector3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(out, Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn scale_must_be_positive() {
        assert!(Pose9Dof::new(
            Vector3::zeros(),
            UnitQuaternion::identity(),
            Vector3::new(1.0, -1.0, 1.0)
        )
        .is_err());
    }

    #[test]
    fn compose_with_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_pose(&mut rng, false);
        let id = Pose9Dof::identity();
        let p = Vector3::new(0.3, -0.7, 1.1);
        assert_abs_diff_eq!(id.compose(&t).unwrap().apply(&p), t.apply(&p), epsilon = 1e-12);
        assert_abs_diff_eq!(t.compose(&id).unwrap().apply(&p), t.apply(&p), epsilon = 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let t = random_pose(&mut rng, true);
            let inv = t.inverse().unwrap();
            let c = t.compose(&inv).unwrap();
            for _ in 0..5 {
                let p = Vector3::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                );
                assert_abs_diff_eq!(c.apply(&p), p, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            // Outer pose uniform-scaled so the composition stays a pose.
            let a = random_pose(&mut rng, true);
            let b = random_pose(&mut rng, false);
            let c = a.compose(&b).unwrap();
            for _ in 0..100 {
                let p = Vector3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                );
                assert_abs_diff_eq!(c.apply(&p), a.apply(&b.apply(&p)), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn anisotropic_composition_with_rotation_is_rejected() {
        let a = Pose9Dof::new(
            Vector3::zeros(),
            UnitQuaternion::identity(),
            Vector3::new(1.0, 2.0, 3.0),
        )
        .unwrap();
        let b = Pose9Dof::from_parts(
            Vector3::zeros(),
            crate::geometry::axis_angle_matrix(&Vector3::new(1.0, 1.0, 1.0), 0.7),
            Vector3::from_element(1.0),
        )
        .unwrap();
        assert!(a.compose(&b).is_err());
        // Axis-permuting inner rotation keeps the scale diagonal.
        let b_y = Pose9Dof::from_parts(Vector3::zeros(), rotation_y_deg(90.0), Vector3::from_element(1.0))
            .unwrap();
        assert!(a.compose(&b_y).is_ok());
    }

    #[test]
    fn apply_inverse_round_trips_anisotropic_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let t = random_pose(&mut rng, false);
            let p = Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            assert_abs_diff_eq!(t.apply_inverse(&t.apply(&p)), p, epsilon = 1e-7);
            assert_abs_diff_eq!(t.apply(&t.apply_inverse(&p)), p, epsilon = 1e-7);
        }
    }

    #[test]
    fn quaternion_matrix_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let pose = random_pose(&mut rng, false);
            assert!(crate::geometry::is_rotation_matrix(
                &pose.rotation_matrix(),
                1e-9
            ));
        }
    }

    #[test]
    fn pose_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pose = random_pose(&mut rng, false);
        let s = serde_json::to_string(&pose).unwrap();
        let back: Pose9Dof = serde_json::from_str(&s).unwrap();
        let p = Vector3::new(0.2, 0.4, -0.6);
        assert_abs_diff_eq!(back.apply(&p), pose.apply(&p), epsilon = 1e-12);
        // Field layout is part of the file contract.
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v.get("t").is_some() && v.get("q").is_some() && v.get("s").is_some());
        assert_eq!(v["q"].as_array().unwrap().len(), 4);
    }
}
