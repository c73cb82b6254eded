//! Fixed-size helpers for the 2×2 and 3×3 matrices used throughout.

#[cfg(not(feature = "std"))]

use num_traits::Float;

pub type Mat3 = [[f64; 3]; 3];
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose3(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat3_vec(a: &Mat3, x: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * x[0] + a[0][1] * x[1] + a[0][2] * x[2],
        a[1][0] * x[0] + a[1][1] * x[1] + a[1][2] * x[2],
        a[2][0] * x[0] + a[2][1] * x[1] + a[2][2] * x[2],
    ]
}

/// Rotation matrix of a unit quaternion stored as `(w, x, y, z)`.
pub fn quat_to_rotation(q: &[f64; 4]) -> Mat3 {
    let [w, x, y, z] = *q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Pull a gradient w.r.t. the rotation matrix back onto the unit quaternion
/// components `(w, x, y, z)`.
pub fn rotation_grad_to_quat(q: &[f64; 4], g: &Mat3) -> [f64; 4] {
    let [w, x, y, z] = *q;
    let dw = -z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1];
    let dx = y * g[0][1] + z * g[0][2] + y * g[1][0] - 2.0 * x * g[1][1] - w * g[1][2]
        + z * g[2][0]
        + w * g[2][1]
        - 2.0 * x * g[2][2];
    let dy = -2.0 * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2]
        - w * g[2][0]
        + z * g[2][1]
        - 2.0 * y * g[2][2];
    let dz = -2.0 * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - 2.0 * z * g[1][1]
        + y * g[1][2]
        + x * g[2][0]
        + y * g[2][1];
    [2.0 * dw, 2.0 * dx, 2.0 * dy, 2.0 * dz]
}

/// Lower Cholesky factor of a symmetric 3×3 matrix, or `None` when the
/// matrix is not positive definite.
pub fn cholesky3(a: &Mat3) -> Option<Mat3> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

/// `xᵀ A⁻¹ x` given the Cholesky factor `L` of `A`, via forward substitution.
pub fn cholesky_quad_form(l: &Mat3, x: &[f64; 3]) -> f64 {
    let z0 = x[0] / l[0][0];
    let z1 = (x[1] - l[1][0] * z0) / l[1][1];
    let z2 = (x[2] - l[2][0] * z0 - l[2][1] * z1) / l[2][2];
    z0 * z0 + z1 * z1 + z2 * z2
}

pub fn det2(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Inverse of a symmetric 2×2 matrix; `None` if singular.
pub fn inverse2(a: &Mat2) -> Option<Mat2> {
    let det = det2(a);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    Some([[a[1][1] * inv, -a[0][1] * inv], [-a[1][0] * inv, a[0][0] * inv]])
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym_eigenvalues2(a: &Mat2) -> [f64; 2] {
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let half_diff = 0.5 * (a[0][0] - a[1][1]);
    let r = (half_diff * half_diff + a[0][1] * a[0][1]).sqrt();
    [mean - r, mean + r]
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(cholesky3(&a).is_none());
    }

    #[test]
    fn quad_form_matches_diagonal() {
        let a = [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 9.0]];
        let l = cholesky3(&a).unwrap();
        let d = cholesky_quad_form(&l, &[2.0, 1.0, 3.0]);
        assert!((d - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let n = (1.0f64 + 4.0 + 9.0 + 16.0).sqrt();
        let q = [1.0 / n, 2.0 / n, 3.0 / n, 4.0 / n];
        let r = quat_to_rotation(&q);
        let rrt = mat3_mul(&r, &transpose3(&r));
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((rrt[i][j] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quaternion_gradient_matches_finite_differences() {
        // Loss = sum_ij G_ij R_ij for a fixed G, treated as a function of the
        // (unnormalized) quaternion components.
        let g = [[0.3, -1.2, 0.7], [0.5, 0.1, -0.4], [-0.9, 0.8, 0.2]];
        let q = [0.6, -0.3, 0.5, 0.2];
        let loss = |q: &[f64; 4]| {
            let r = quat_to_rotation(q);
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += g[i][j] * r[i][j];
                }
            }
            s
        };
        let analytic = rotation_grad_to_quat(&q, &g);
        for k in 0..4 {
            let h = 1e-6;
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let numeric = (loss(&qp) - loss(&qm)) / (2.0 * h);
            assert!((numeric - analytic[k]).abs() < 1e-8, "component {k}");
        }
    }
}
