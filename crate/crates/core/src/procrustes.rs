//! Weighted orthogonal Procrustes rotation estimation with reflection
//! correction, a closed-form similarity (Umeyama) variant, and exact
//! reverse-mode gradients of the rotation through the SVD.
//!
//! Given CAD-side points `p_cad`, scan-side points `p_scan`, and weights,
//! both sets are centered on their weighted centroids and the rotation
//! minimizing `sum_i w_i ||R (p_cad_i - c_cad) - (p_scan_i - c_scan)||^2`
//! over SO(3) is recovered from the SVD of the cross-covariance
//! `M = sum_i w_i q_i r_i'` (scan-centered times cad-centered transposed):
//! `R = U diag(1, 1, d) V'` with `d = det(U V')`, which flips the weakest
//! singular direction whenever the unconstrained optimum is a reflection.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Minimum singular-value separation for a well-defined SVD derivative.
/// Below it [`rotation_gradient`] reports [`Error::GradientSingular`]
/// instead of clamping silently.
pub const SVD_GAP_EPS: f64 = 1e-6;

/// Relative threshold under which the centered cross-covariance is treated
/// as rank-deficient (rotation not identifiable).
const RANK_EPS: f64 = 1e-12;

/// Paired CAD-space and scan-space points with non-negative weights.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet {
    p_cad: Vec<Vector3<f64>>,
    p_scan: Vec<Vector3<f64>>,
    weights: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn new(
        p_cad: Vec<Vector3<f64>>,
        p_scan: Vec<Vector3<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if p_cad.len() != p_scan.len() || p_cad.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "correspondence arrays disagree: cad {}, scan {}, weights {}",
                p_cad.len(),
                p_scan.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and non-negative".into(),
            ));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::InvalidParameter("weights must not all be zero".into()));
        }
        Ok(Self {
            p_cad,
            p_scan,
            weights,
        })
    }

    pub fn with_uniform_weights(
        p_cad: Vec<Vector3<f64>>,
        p_scan: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let w = vec![1.0; p_cad.len()];
        Self::new(p_cad, p_scan, w)
    }

    pub fn len(&self) -> usize {
        self.p_cad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_cad.is_empty()
    }

    pub fn p_cad(&self) -> &[Vector3<f64>] {
        &self.p_cad
    }

    pub fn p_scan(&self) -> &[Vector3<f64>] {
        &self.p_scan
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Subset by index, reusing weights. Used by RANSAC minimal samples.
    pub fn subset(&self, indices: &[usize]) -> Result<CorrespondenceSet> {
        CorrespondenceSet::new(
            indices.iter().map(|&i| self.p_cad[i]).collect(),
            indices.iter().map(|&i| self.p_scan[i]).collect(),
            indices.iter().map(|&i| self.weights[i]).collect(),
        )
    }

    fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn centroids(&self) -> (Vector3<f64>, Vector3<f64>, f64) {
        let w_sum = self.weight_sum();
        let mut c_cad = Vector3::zeros();
        let mut c_scan = Vector3::zeros();
        for i in 0..self.len() {
            c_cad += self.weights[i] * self.p_cad[i];
            c_scan += self.weights[i] * self.p_scan[i];
        }
        (c_cad / w_sum, c_scan / w_sum, w_sum)
    }
}

/// Output of [`solve_rotation`]: the optimal rotation plus the SVD
/// by-products needed for diagnostics and the backward pass.
#[derive(Debug, Clone)]
pub struct ProcrustesSolution {
    pub rotation: Matrix3<f64>,
    /// Singular values of the cross-covariance, descending.
    pub singular_values: [f64; 3],
    pub centroid_cad: Vector3<f64>,
    pub centroid_scan: Vector3<f64>,
    pub cross_covariance: Matrix3<f64>,
    u: Matrix3<f64>,
    v: Matrix3<f64>,
    det_sign: f64,
}

/// Similarity transform `p_scan ≈ s * R * p_cad + t` with uniform scale.
#[derive(Debug, Clone)]
pub struct SimilarityTransform {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Gradients of a scalar loss with respect to both point sets, given the
/// loss gradient with respect to the rotation.
#[derive(Debug, Clone)]
pub struct RotationGradient {
    pub d_p_cad: Vec<Vector3<f64>>,
    pub d_p_scan: Vec<Vector3<f64>>,
}

/// 3x3 SVD with singular values sorted descending and the columns of `U`,
/// `V` permuted to match.
fn svd3_sorted(m: &Matrix3<f64>) -> Result<(Matrix3<f64>, [f64; 3], Matrix3<f64>)> {
    let svd = nalgebra::SVD::new(*m, true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => {
            return Err(Error::DegenerateConfiguration(
                "svd of cross-covariance failed to produce factors".into(),
            ))
        }
    };
    let mut order = [0usize, 1, 2];
    let sv = svd.singular_values;
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let mut u_s = Matrix3::zeros();
    let mut v_s = Matrix3::zeros();
    let mut sigma = [0.0; 3];
    let v = vt.transpose();
    for (dst, &src) in order.iter().enumerate() {
        u_s.set_column(dst, &u.column(src));
        v_s.set_column(dst, &v.column(src));
        sigma[dst] = sv[src];
    }
    Ok((u_s, sigma, v_s))
}

/// Optimal rotation bringing centered CAD points onto centered scan points.
///
/// Errors with [`Error::TooFewPoints`] for `n < 3` and
/// [`Error::DegenerateConfiguration`] when the centered configuration has
/// rank < 2 (e.g. all points collinear); the caller decides the fallback.
pub fn solve_rotation(c: &CorrespondenceSet) -> Result<ProcrustesSolution> {
    if c.len() < 3 {
        return Err(Error::TooFewPoints(c.len()));
    }
    let (c_cad, c_scan, _) = c.centroids();
    let mut m = Matrix3::zeros();
    for i in 0..c.len() {
        let q = c.p_scan[i] - c_scan;
        let r = c.p_cad[i] - c_cad;
        m += c.weights[i] * q * r.transpose();
    }
    let (u, sigma, v) = svd3_sorted(&m)?;
    if !(sigma[0] > 0.0) || sigma[1] <= RANK_EPS * sigma[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "cross-covariance rank < 2 (singular values {sigma:?})"
        )));
    }
    let d = (u * v.transpose()).determinant().signum();
    let rotation = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v.transpose();
    Ok(ProcrustesSolution {
        rotation,
        singular_values: sigma,
        centroid_cad: c_cad,
        centroid_scan: c_scan,
        cross_covariance: m,
        u,
        v,
        det_sign: d,
    })
}

/// Weighted residual `sum_i w_i ||R (p_cad_i - c_cad) - (p_scan_i - c_scan)||^2`
/// of an arbitrary rotation on the centered sets.
pub fn centered_residual(c: &CorrespondenceSet, rotation: &Matrix3<f64>) -> f64 {
    let (c_cad, c_scan, _) = c.centroids();
    let mut acc = 0.0;
    for i in 0..c.len() {
        let r = rotation * (c.p_cad[i] - c_cad) - (c.p_scan[i] - c_scan);
        acc += c.weights[i] * r.norm_squared();
    }
    acc
}

/// Closed-form weighted similarity fit (rotation, uniform scale,
/// translation) minimizing `sum_i w_i ||s R p_cad_i + t - p_scan_i||^2`.
pub fn solve_similarity(c: &CorrespondenceSet) -> Result<SimilarityTransform> {
    let sol = solve_rotation(c)?;
    let (c_cad, c_scan, _) = c.centroids();
    let mut var_cad = 0.0;
    for i in 0..c.len() {
        var_cad += c.weights[i] * (c.p_cad[i] - c_cad).norm_squared();
    }
    if var_cad <= 1e-24 {
        return Err(Error::ZeroVariance);
    }
    let s = sol.singular_values;
    let scale = (s[0] + s[1] + sol.det_sign * s[2]) / var_cad;
    let translation = c_scan - scale * (sol.rotation * c_cad);
    Ok(SimilarityTransform {
        rotation: sol.rotation,
        scale,
        translation,
    })
}

/// Reverse-mode derivative of the rotation with respect to both point sets,
/// composed with `dl_drot` (the loss gradient at the rotation).
///
/// Uses the SVD adjoint in the antisymmetric K-matrix form applied to the
/// cross-covariance, then chains through the weighted centering. The
/// determinant correction is piecewise constant and contributes no
/// derivative. Requires all singular-value gaps and `sigma2 + sigma3` to
/// exceed [`SVD_GAP_EPS`]; otherwise [`Error::GradientSingular`] is
/// returned and the caller may jitter the points or skip the sample.
pub fn rotation_gradient(
    c: &CorrespondenceSet,
    dl_drot: &Matrix3<f64>,
) -> Result<RotationGradient> {
    let sol = solve_rotation(c)?;
    rotation_gradient_at(c, &sol, dl_drot)
}

/// As [`rotation_gradient`] but reusing an existing solution.
pub fn rotation_gradient_at(
    c: &CorrespondenceSet,
    sol: &ProcrustesSolution,
    dl_drot: &Matrix3<f64>,
) -> Result<RotationGradient> {
    let s = sol.singular_values;
    let min_gap = (s[0] - s[1]).min(s[1] - s[2]).min(s[0] - s[2]);
    if min_gap <= SVD_GAP_EPS || s[1] + s[2] <= SVD_GAP_EPS {
        return Err(Error::GradientSingular(format!(
            "singular values {s:?}: gap {min_gap:.3e} or tail sum {:.3e} below {SVD_GAP_EPS:.0e}",
            s[1] + s[2]
        )));
    }

    let d_mat = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sol.det_sign));
    // R = U D V', so dL/dU = G V D and dL/dV = G' U D.
    let g_u = dl_drot * sol.v * d_mat;
    let g_v = dl_drot.transpose() * sol.u * d_mat;

    let a_u = sol.u.transpose() * g_u - g_u.transpose() * sol.u;
    let a_v = sol.v.transpose() * g_v - g_v.transpose() * sol.v;

    let mut inner = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let f = 1.0 / ((s[j] - s[i]) * (s[j] + s[i]));
            inner[(i, j)] = f * (a_u[(i, j)] * s[j] + s[i] * a_v[(i, j)]);
        }
    }
    let m_bar = sol.u * inner * sol.v.transpose();

    // dM/dp chains: with weighted centroids the centering terms vanish
    // because the centered sets have zero weighted mean.
    let m_bar_t = m_bar.transpose();
    let mut d_p_cad = Vec::with_capacity(c.len());
    let mut d_p_scan = Vec::with_capacity(c.len());
    for i in 0..c.len() {
        let q = c.p_scan[i] - sol.centroid_scan;
        let r = c.p_cad[i] - sol.centroid_cad;
        d_p_cad.push(c.weights[i] * (m_bar_t * q));
        d_p_scan.push(c.weights[i] * (m_bar * r));
    }
    Ok(RotationGradient { d_p_cad, d_p_scan })
}
