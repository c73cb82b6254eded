//! Gaussian scene representation: raw trainable parameters, activations and
//! covariance construction.

use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]

use num_traits::Float;

use crate::linalg::{self, Mat3};
use crate::{sigmoid, Error, Result};

/// Trainable parameters of a single Gaussian, before activation.
///
/// Positions live in normalized volume coordinates `[0, 1]³`. The rotation
/// quaternion is stored as `(w, x, y, z)` and normalized on use.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGaussianParams {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub raw_opacity: f64,
    pub base_color: [f64; 3],
    pub base_semantic: Vec<f64>,
}

impl RawGaussianParams {
    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.raw_opacity.is_finite()
            && self.base_color.iter().all(|v| v.is_finite())
            && self.base_semantic.iter().all(|v| v.is_finite())
    }
}

/// Symmetric positive-definite 3×3 covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3(Mat3);

impl Covariance3 {
    /// Validates symmetry (to 1e-12 relative) and positive definiteness.
    pub fn new(matrix: Mat3) -> Result<Self> {
        let scale = matrix.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..3 {
            for j in 0..i {
                if (matrix[i][j] - matrix[j][i]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(Error::DegenerateCovariance(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if linalg::cholesky3(&matrix).is_none() {
            return Err(Error::DegenerateCovariance(
                "matrix is not positive definite".into(),
            ));
        }
        Ok(Covariance3(matrix))
    }

    pub(crate) fn from_matrix_unchecked(matrix: Mat3) -> Self {
        Covariance3(matrix)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }
}

/// A Gaussian after parameter squashing: what the renderer composites.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivatedGaussian {
    pub mean: [f64; 3],
    pub covariance: Covariance3,
    pub opacity: f64,
    pub color: [f64; 3],
    pub semantic: Vec<f64>,
}

/// Unit quaternion and its norm, or an error for a zero quaternion.
pub(crate) fn normalize_quat(q: &[f64; 4]) -> Result<([f64; 4], f64)> {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateRotation);
    }
    Ok(([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm], norm))
}

/// Rotation and per-axis standard deviations behind a covariance, kept for
/// the backward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CovarianceFactors {
    pub unit_quat: [f64; 4],
    pub quat_norm: f64,
    pub rotation: Mat3,
    pub scale: [f64; 3],
}

pub(crate) fn covariance_factors(log_scale: &[f64; 3], rotation: &[f64; 4]) -> Result<(Mat3, CovarianceFactors)> {
    let (unit_quat, quat_norm) = normalize_quat(rotation)?;
    let r = linalg::quat_to_rotation(&unit_quat);
    let scale = [log_scale[0].exp(), log_scale[1].exp(), log_scale[2].exp()];
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += r[i][k] * scale[k] * scale[k] * r[j][k];
            }
            sigma[i][j] = acc;
        }
    }
    // Exact symmetry regardless of rounding order.
    for i in 0..3 {
        for j in 0..i {
            let avg = 0.5 * (sigma[i][j] + sigma[j][i]);
            sigma[i][j] = avg;
            sigma[j][i] = avg;
        }
    }
    Ok((sigma, CovarianceFactors { unit_quat, quat_norm, rotation: r, scale }))
}

/// `R · diag(exp(log_scale))² · Rᵀ` for the normalized quaternion `rotation`.
pub fn build_covariance(log_scale: &[f64; 3], rotation: &[f64; 4]) -> Result<Covariance3> {
    let (sigma, _) = covariance_factors(log_scale, rotation)?;
    if !sigma.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::DegenerateCovariance("non-finite scale".into()));
    }
    Covariance3::new(sigma)
}

/// Pull a gradient w.r.t. Σ (entries treated independently) back to the
/// log-scales and the raw quaternion.
pub(crate) fn covariance_backward(f: &CovarianceFactors, d_sigma: &Mat3) -> ([f64; 3], [f64; 4]) {
    // Σ = M Mᵀ with M = R·S, so dL/dM = (G + Gᵀ) M.
    let mut d_m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += (d_sigma[i][k] + d_sigma[k][i]) * f.rotation[k][j] * f.scale[j];
            }
            d_m[i][j] = acc;
        }
    }
    let mut d_log_scale = [0.0; 3];
    let mut d_rot = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut d_s = 0.0;
        for i in 0..3 {
            d_s += f.rotation[i][j] * d_m[i][j];
            d_rot[i][j] = d_m[i][j] * f.scale[j];
        }
        d_log_scale[j] = d_s * f.scale[j];
    }
    let d_unit = linalg::rotation_grad_to_quat(&f.unit_quat, &d_rot);
    let q = f.unit_quat;
    let proj = q[0] * d_unit[0] + q[1] * d_unit[1] + q[2] * d_unit[2] + q[3] * d_unit[3];
    let mut d_quat = [0.0; 4];
    for k in 0..4 {
        d_quat[k] = (d_unit[k] - q[k] * proj) / f.quat_norm;
    }
    (d_log_scale, d_quat)
}

/// Unnormalized Gaussian response `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`, in `(0, 1]`.
pub fn evaluate_response(g: &ActivatedGaussian, x: &[f64; 3]) -> Result<f64> {
    let l = linalg::cholesky3(g.covariance.matrix()).ok_or_else(|| {
        Error::DegenerateCovariance("covariance is not positive definite".into())
    })?;
    let d = [x[0] - g.mean[0], x[1] - g.mean[1], x[2] - g.mean[2]];
    Ok((-0.5 * linalg::cholesky_quad_form(&l, &d)).exp())
}

pub fn activate(raw: &RawGaussianParams) -> Result<ActivatedGaussian> {
    if !raw.is_finite() {
        return Err(Error::Validation("raw Gaussian parameters must be finite".into()));
    }
    Ok(ActivatedGaussian {
        mean: raw.position,
        covariance: build_covariance(&raw.log_scale, &raw.rotation)?,
        opacity: sigmoid(raw.raw_opacity),
        color: raw.base_color.map(sigmoid),
        semantic: raw.base_semantic.iter().copied().map(sigmoid).collect(),
    })
}

/// The explicit scene, stored as one flat buffer per parameter group so the
/// optimizer can treat each group as a single slice.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    semantic_dim: usize,
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub raw_opacities: Vec<f64>,
    pub base_colors: Vec<[f64; 3]>,
    /// `len() * semantic_dim` values, Gaussian-major.
    pub base_semantics: Vec<f64>,
}

impl GaussianSet {
    pub fn new(semantic_dim: usize) -> Self {
        GaussianSet {
            semantic_dim,
            positions: Vec::new(),
            log_scales: Vec::new(),
            rotations: Vec::new(),
            raw_opacities: Vec::new(),
            base_colors: Vec::new(),
            base_semantics: Vec::new(),
        }
    }

    pub fn from_params(semantic_dim: usize, params: impl IntoIterator<Item = RawGaussianParams>) -> Result<Self> {
        let mut set = GaussianSet::new(semantic_dim);
        for p in params {
            set.push(p)?;
        }
        Ok(set)
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic_dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, p: RawGaussianParams) -> Result<()> {
        if p.base_semantic.len() != self.semantic_dim {
            return Err(Error::Shape(format!(
                "semantic vector has {} channels, scene expects {}",
                p.base_semantic.len(),
                self.semantic_dim
            )));
        }
        self.positions.push(p.position);
        self.log_scales.push(p.log_scale);
        self.rotations.push(p.rotation);
        self.raw_opacities.push(p.raw_opacity);
        self.base_colors.push(p.base_color);
        self.base_semantics.extend_from_slice(&p.base_semantic);
        Ok(())
    }

    pub fn semantic(&self, i: usize) -> &[f64] {
        &self.base_semantics[i * self.semantic_dim..(i + 1) * self.semantic_dim]
    }

    pub fn params(&self, i: usize) -> RawGaussianParams {
        RawGaussianParams {
            position: self.positions[i],
            log_scale: self.log_scales[i],
            rotation: self.rotations[i],
            raw_opacity: self.raw_opacities[i],
            base_color: self.base_colors[i],
            base_semantic: self.semantic(i).to_vec(),
        }
    }

    /// Keep only the Gaussians for which `keep[i]` is true, preserving order.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        let k = self.semantic_dim;
        let mut w = 0;
        for r in 0..keep.len() {
            if !keep[r] {
                continue;
            }
            self.positions[w] = self.positions[r];
            self.log_scales[w] = self.log_scales[r];
            self.rotations[w] = self.rotations[r];
            self.raw_opacities[w] = self.raw_opacities[r];
            self.base_colors[w] = self.base_colors[r];
            self.base_semantics.copy_within(r * k..(r + 1) * k, w * k);
            w += 1;
        }
        self.positions.truncate(w);
        self.log_scales.truncate(w);
        self.rotations.truncate(w);
        self.raw_opacities.truncate(w);
        self.base_colors.truncate(w);
        self.base_semantics.truncate(w * k);
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.raw_opacities.iter().all(|v| v.is_finite())
            && self.base_colors.iter().flatten().all(|v| v.is_finite())
            && self.base_semantics.iter().all(|v| v.is_finite())
    }

    /// Activated opacity of Gaussian `i`, ignoring tri-plane modulation.
    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.raw_opacities[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const IDENTITY_Q: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

    fn assert_mat_close(a: &Mat3, b: &Mat3, tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() <= tol, "({i},{j}): {} vs {}", a[i][j], b[i][j]);
            }
        }
    }

    fn raw(opacity: f64) -> RawGaussianParams {
        RawGaussianParams {
            position: [0.5; 3],
            log_scale: [0.0; 3],
            rotation: IDENTITY_Q,
            raw_opacity: opacity,
            base_color: [0.0; 3],
            base_semantic: alloc::vec![0.0; 3],
        }
    }

    #[test]
    fn unit_scale_identity_rotation_is_identity() {
        let c = build_covariance(&[0.0; 3], &IDENTITY_Q).unwrap();
        assert_mat_close(c.matrix(), &linalg::IDENTITY3, 0.0);
    }

    #[test]
    fn scale_is_exponentiated_then_squared() {
        let c = build_covariance(&[2.0f64.ln(), 0.0, 0.0], &IDENTITY_Q).unwrap();
        let expect = [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_mat_close(c.matrix(), &expect, 1e-12);
    }

    #[test]
    fn rotated_unit_covariance_stays_identity() {
        // 90° about z: q = (cos 45°, 0, 0, sin 45°). Rebuild R diag(1) Rᵀ by an
        // explicit product as the reference.
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let q = [h, 0.0, 0.0, h];
        let r = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let reference = linalg::mat3_mul(&r, &linalg::transpose3(&r));
        let c = build_covariance(&[0.0; 3], &q).unwrap();
        assert_mat_close(c.matrix(), &reference, 1e-12);
        assert_mat_close(c.matrix(), &linalg::IDENTITY3, 1e-12);
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        assert_eq!(build_covariance(&[0.0; 3], &[0.0; 4]), Err(Error::DegenerateRotation));
    }

    #[test]
    fn response_values() {
        let g = activate(&raw(0.0)).unwrap();
        assert_eq!(evaluate_response(&g, &g.mean).unwrap(), 1.0);
        let x = [g.mean[0] + 1.0, g.mean[1], g.mean[2]];
        assert!((evaluate_response(&g, &x).unwrap() - (-0.5f64).exp()).abs() < 1e-15);

        let mut stretched = raw(0.0);
        stretched.log_scale = [2.0f64.ln(), 0.0, 0.0];
        let g = activate(&stretched).unwrap();
        let x = [g.mean[0] + 2.0, g.mean[1], g.mean[2]];
        assert!((evaluate_response(&g, &x).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn activation_examples() {
        let g = activate(&raw(0.0)).unwrap();
        assert_eq!(g.opacity, 0.5);
        assert_eq!(g.color, [0.5; 3]);
        assert!(activate(&raw(-800.0)).unwrap().opacity < 1e-300);
        assert!(activate(&raw(f64::NAN)).is_err());
    }

    #[test]
    fn covariance_gradient_matches_finite_differences() {
        let log_scale = [-0.3, 0.2, 0.05];
        let q = [0.8, 0.1, -0.4, 0.3];
        let g = [[0.4, -0.2, 0.9], [0.1, -0.7, 0.3], [0.6, 0.2, -0.5]];
        let loss = |ls: &[f64; 3], q: &[f64; 4]| {
            let (s, _) = covariance_factors(ls, q).unwrap();
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += g[i][j] * s[i][j];
                }
            }
            acc
        };
        let (_, f) = covariance_factors(&log_scale, &q).unwrap();
        let (d_ls, d_q) = covariance_backward(&f, &g);
        let h = 1e-6;
        for k in 0..3 {
            let (mut p, mut m) = (log_scale, log_scale);
            p[k] += h;
            m[k] -= h;
            let n = (loss(&p, &q) - loss(&m, &q)) / (2.0 * h);
            assert!((n - d_ls[k]).abs() < 1e-7, "log_scale {k}: {n} vs {}", d_ls[k]);
        }
        for k in 0..4 {
            let (mut p, mut m) = (q, q);
            p[k] += h;
            m[k] -= h;
            let n = (loss(&log_scale, &p) - loss(&log_scale, &m)) / (2.0 * h);
            assert!((n - d_q[k]).abs() < 1e-7, "quat {k}: {n} vs {}", d_q[k]);
        }
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> Covariance3 {
        let ls = [rng.random_range(-2.0..1.0), rng.random_range(-2.0..1.0), rng.random_range(-2.0..1.0)];
        let q = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0)];
        build_covariance(&ls, &q).unwrap()
    }

    #[test]
    fn response_peaks_at_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let g = ActivatedGaussian {
                mean: [rng.random(), rng.random(), rng.random()],
                covariance: random_spd(&mut rng),
                opacity: 0.5,
                color: [0.5; 3],
                semantic: Vec::new(),
            };
            let dir = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let eps = rng.random_range(1e-4..0.5);
            let x = [g.mean[0] + eps * dir[0], g.mean[1] + eps * dir[1], g.mean[2] + eps * dir[2]];
            assert!(evaluate_response(&g, &g.mean).unwrap() >= evaluate_response(&g, &x).unwrap());
        }
    }

    proptest! {
        #[test]
        fn quaternion_sign_does_not_change_covariance(
            ls in proptest::array::uniform3(-3.0f64..2.0),
            q in proptest::array::uniform4(-1.0f64..1.0),
        ) {
            prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            let neg = q.map(|v| -v);
            let a = build_covariance(&ls, &q).unwrap();
            let b = build_covariance(&ls, &neg).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((a.matrix()[i][j] - b.matrix()[i][j]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn opacity_is_monotone(mut xs in proptest::collection::vec(-30.0f64..30.0, 2..20)) {
            xs.sort_by(f64::total_cmp);
            let alphas: Vec<f64> = xs.iter().map(|&x| activate(&raw(x)).unwrap().opacity).collect();
            for w in alphas.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for a in alphas {
                prop_assert!(a > 0.0 && a < 1.0);
            }
        }
    }
}
