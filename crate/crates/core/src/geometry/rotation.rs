//! Small rotation utilities used across the solver, symmetry groups, and
//! evaluation metrics.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;

/// Geodesic angle between two rotations in degrees.
///
/// Equals `arccos((trace(Ra' * Rb) - 1) / 2)` with the argument clamped to
/// `[-1, 1]`, evaluated through `atan2` of the skew and trace parts so tiny
/// angles keep full precision (plain `acos` floors out around 2e-6 degrees).
/// The result lies in `[0, 180]`.
pub fn rotation_angle_deg(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> f64 {
    let m = ra.transpose() * rb;
    let c = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    // For a rotation by theta, ||M - M'||_F = 2*sqrt(2)*|sin(theta)|.
    let s = ((m - m.transpose()).norm() / (2.0 * std::f64::consts::SQRT_2)).clamp(0.0, 1.0);
    s.atan2(c).to_degrees()
}

/// Rotation about the +y axis by `deg` degrees.
pub fn rotation_y_deg(deg: f64) -> Matrix3<f64> {
    let r = deg.to_radians();
    let (s, c) = r.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rodrigues rotation about `axis` (not necessarily unit) by `rad` radians.
pub fn axis_angle_matrix(axis: &Vector3<f64>, rad: f64) -> Matrix3<f64> {
    let a = axis.normalize();
    let (s, c) = rad.sin_cos();
    let k = Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
    Matrix3::identity() + s * k + (1.0 - c) * (k * k)
}

/// Checks orthonormality and `det = +1` within `tol`.
pub fn is_rotation_matrix(r: &Matrix3<f64>, tol: f64) -> bool {
    let gram = r.transpose() * r;
    (gram - Matrix3::identity()).norm() <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Uniformly distributed random rotation (normalized 4-Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            normal_sample(rng),
            normal_sample(rng),
            normal_sample(rng),
            normal_sample(rng),
        );
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

fn normal_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; avoids pulling a distributions dependency into this module.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_rotations_have_zero_angle() {
        let r = rotation_y_deg(37.0);
        assert_abs_diff_eq!(rotation_angle_deg(&r, &r), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn z_quarter_turn_is_ninety_degrees() {
        let rz = axis_angle_matrix(&Vector3::z(), 90f64.to_radians());
        assert_abs_diff_eq!(
            rotation_angle_deg(&Matrix3::identity(), &rz),
            90.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn diagonal_axis_angle_round_trips() {
        let r = axis_angle_matrix(&Vector3::new(1.0, 1.0, 1.0), 20f64.to_radians());
        assert_abs_diff_eq!(
            rotation_angle_deg(&Matrix3::identity(), &r),
            20.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn random_quaternions_give_proper_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let m = random_rotation(&mut rng).to_rotation_matrix().into_inner();
            assert!(is_rotation_matrix(&m, 1e-9));
        }
    }

    #[test]
    fn angle_is_symmetric_and_respects_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_rotation(&mut rng).to_rotation_matrix().into_inner();
            let b = random_rotation(&mut rng).to_rotation_matrix().into_inner();
            let c = random_rotation(&mut rng).to_rotation_matrix().into_inner();
            let ab = rotation_angle_deg(&a, &b);
            let ba = rotation_angle_deg(&b, &a);
            assert_abs_diff_eq!(ab, ba, epsilon = 1e-6);
            let bc = rotation_angle_deg(&b, &c);
            let ac = rotation_angle_deg(&a, &c);
            assert!(ac <= ab + bc + 1e-6);
        }
    }
}
