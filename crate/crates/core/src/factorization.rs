//! Marginal/conditional split of a 3D Gaussian along a slice normal.
//!
//! With Σ partitioned into the in-plane block `A` (2×2), the cross block `b`
//! (2×1) and the normal variance `c`, the unnormalized response factorizes
//! exactly as
//!
//! ```text
//! G(u, v, t) = exp(-(t - μn)² / 2c) · exp(-½ dᵀ S⁻¹ d),
//! d = (u, v) - μ⊥ - β (t - μn),   β = b / c,   S = A - b bᵀ / c.
//! ```
//!
//! Only `d` depends on the slice depth, so everything else is computed once
//! per (Gaussian, axis).

#[cfg(not(feature = "std"))]

use num_traits::Float;

use crate::gaussian::Covariance3;
use crate::linalg::{self, Mat2};
use crate::{Axis, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizedGaussian {
    pub axis: Axis,
    /// Coordinate of the mean along the slice normal.
    pub marginal_mean: f64,
    /// Σnn.
    pub marginal_var: f64,
    /// In-plane mean μ⊥.
    pub plane_mean: [f64; 2],
    /// Σ⊥n / Σnn: how the in-plane center slides with depth.
    pub regression: [f64; 2],
    /// Schur complement Σ⊥⊥ − Σ⊥n Σnn⁻¹ Σn⊥.
    pub cond_cov: Mat2,
    pub cond_precision: Mat2,
    pub source_index: usize,
}

pub fn factorize(mean: &[f64; 3], cov: &Covariance3, axis: Axis, source_index: usize) -> Result<FactorizedGaussian> {
    let s = cov.matrix();
    let n = axis.normal();
    let (a, b) = axis.plane();
    let var = s[n][n];
    if !(var > 0.0) {
        return Err(Error::DegenerateCovariance("non-positive variance along slice normal".into()));
    }
    let cross = [s[a][n], s[b][n]];
    let regression = [cross[0] / var, cross[1] / var];
    let cond_cov = [
        [s[a][a] - cross[0] * regression[0], s[a][b] - cross[0] * regression[1]],
        [s[b][a] - cross[1] * regression[0], s[b][b] - cross[1] * regression[1]],
    ];
    let cond_cov = [[cond_cov[0][0], cond_cov[0][1]], [cond_cov[0][1], cond_cov[1][1]]];
    if !(cond_cov[0][0] > 0.0 && linalg::det2(&cond_cov) > 0.0) {
        return Err(Error::DegenerateCovariance("conditional covariance is not positive definite".into()));
    }
    let cond_precision = linalg::inverse2(&cond_cov)
        .ok_or_else(|| Error::DegenerateCovariance("singular conditional covariance".into()))?;
    Ok(FactorizedGaussian {
        axis,
        marginal_mean: mean[n],
        marginal_var: var,
        plane_mean: [mean[a], mean[b]],
        regression,
        cond_cov,
        cond_precision,
        source_index,
    })
}

impl FactorizedGaussian {
    /// In-plane center of the conditional at depth `t`.
    pub fn cond_mean_at(&self, t: f64) -> [f64; 2] {
        let dt = t - self.marginal_mean;
        [self.plane_mean[0] + self.regression[0] * dt, self.plane_mean[1] + self.regression[1] * dt]
    }

    /// `G(t)`: unnormalized 1D marginal along the normal.
    pub fn marginal_response(&self, t: f64) -> f64 {
        let dt = t - self.marginal_mean;
        (-dt * dt / (2.0 * self.marginal_var)).exp()
    }

    /// `G(u, v | t)`: unnormalized 2D conditional in the slice plane.
    pub fn conditional_response(&self, u: f64, v: f64, t: f64) -> f64 {
        let c = self.cond_mean_at(t);
        (-0.5 * self.cond_form(u - c[0], v - c[1])).exp()
    }

    /// Joint response as the product of the two factors.
    pub fn response(&self, u: f64, v: f64, t: f64) -> f64 {
        self.marginal_response(t) * self.conditional_response(u, v, t)
    }

    /// True when the slice at depth `t` lies within `k_sigma` standard
    /// deviations of the marginal mean (inclusive).
    pub fn slice_cull(&self, t: f64, k_sigma: f64) -> bool {
        (t - self.marginal_mean).abs() <= k_sigma * self.marginal_var.sqrt()
    }

    #[inline]
    pub(crate) fn cond_form(&self, du: f64, dv: f64) -> f64 {
        let p = &self.cond_precision;
        du * (p[0][0] * du + p[0][1] * dv) + dv * (p[1][0] * du + p[1][1] * dv)
    }

    /// `Σ⁻¹ x` for `x = point − μ`, assembled from the cached blocks, returned
    /// in world coordinate order.
    pub(crate) fn precision_times_offset(&self, du_plane: f64, dv_plane: f64, dt: f64) -> [f64; 3] {
        // d = x⊥ − β xn;  y⊥ = S⁻¹ d;  yn = xn / c − βᵀ y⊥.
        let d0 = du_plane - self.regression[0] * dt;
        let d1 = dv_plane - self.regression[1] * dt;
        let p = &self.cond_precision;
        let y0 = p[0][0] * d0 + p[0][1] * d1;
        let y1 = p[1][0] * d0 + p[1][1] * d1;
        let yn = dt / self.marginal_var - self.regression[0] * y0 - self.regression[1] * y1;
        let mut out = [0.0; 3];
        let (a, b) = self.axis.plane();
        out[a] = y0;
        out[b] = y1;
        out[self.axis.normal()] = yn;
        out
    }
}
