//! Per-slice setup shared by the forward and backward passes: factorize,
//! cull, decode appearance, order and bound every Gaussian.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]

use num_traits::Float;

use super::{Scene, SlicePlaneSpec};
use crate::factorization::{factorize, FactorizedGaussian};
use crate::gaussian::{covariance_factors, Covariance3};
use crate::{sigmoid, Error, Result};

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PixelBox {
    pub col0: usize,
    pub col1: usize,
    pub row0: usize,
    pub row1: usize,
}

impl PixelBox {
    #[inline]
    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.col0 && col <= self.col1 && row >= self.row0 && row <= self.row1
    }
}

fn pixel_range(center: f64, extent: f64, pixels: usize) -> Option<(usize, usize)> {
    if !extent.is_finite() {
        return Some((0, pixels - 1));
    }
    let n = pixels as f64;
    // Pixel c is covered when |(c + 0.5)/n − center| ≤ extent.
    let lo = ((center - extent) * n - 0.5).ceil().max(0.0);
    let hi = ((center + extent) * n - 0.5).floor().min(n - 1.0);
    if lo > hi {
        None
    } else {
        Some((lo as usize, hi as usize))
    }
}

/// Pixels whose centers fall inside the axis-aligned bounds of the
/// `k_sigma` ellipse of the in-plane conditional at the slice depth.
pub(crate) fn pixel_box(fg: &FactorizedGaussian, spec: &SlicePlaneSpec) -> Option<PixelBox> {
    let center = fg.cond_mean_at(spec.depth);
    let k = spec.k_sigma;
    let (col0, col1) = pixel_range(center[0], k * fg.cond_cov[0][0].sqrt(), spec.width)?;
    let (row0, row1) = pixel_range(center[1], k * fg.cond_cov[1][1].sqrt(), spec.height)?;
    Some(PixelBox { col0, col1, row0, row1 })
}

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub source: usize,
    pub fg: FactorizedGaussian,
    pub cond_center: [f64; 2],
    pub marginal: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    pub bbox: PixelBox,
}

impl Entry {
    /// Factorized response at an in-plane position on this slice.
    #[inline]
    pub fn response(&self, u: f64, v: f64) -> f64 {
        let du = u - self.cond_center[0];
        let dv = v - self.cond_center[1];
        self.marginal * (-0.5 * self.fg.cond_form(du, dv)).exp()
    }
}

pub(crate) struct Prepared {
    /// Surviving Gaussians in compositing order.
    pub entries: Vec<Entry>,
    /// Activated semantics, `entries.len() × k`.
    pub semantic: Vec<f64>,
    pub k: usize,
}

impl Prepared {
    #[inline]
    pub fn semantic(&self, e: usize) -> &[f64] {
        &self.semantic[e * self.k..(e + 1) * self.k]
    }
}

pub(crate) fn check_inputs(scene: &Scene, spec: &SlicePlaneSpec) -> Result<()> {
    spec.validate()?;
    scene.check_shapes()?;
    if scene.gaussians.is_empty() {
        return Err(Error::Validation("cannot render an empty scene".into()));
    }
    Ok(())
}

pub(crate) fn prepare(scene: &Scene, spec: &SlicePlaneSpec) -> Result<Prepared> {
    let gs = &scene.gaussians;
    let t = spec.depth;
    let mut survivors: Vec<(f64, usize, FactorizedGaussian, PixelBox)> = Vec::new();
    for i in 0..gs.len() {
        let (sigma, _) = covariance_factors(&gs.log_scales[i], &gs.rotations[i])?;
        let fg = factorize(&gs.positions[i], &Covariance3::from_matrix_unchecked(sigma), spec.axis, i)?;
        if !fg.slice_cull(t, spec.k_sigma) {
            continue;
        }
        if let Some(bbox) = pixel_box(&fg, spec) {
            survivors.push(((fg.marginal_mean - t).abs(), i, fg, bbox));
        }
    }
    survivors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let k = scene.semantic_dim();
    let mlp = &scene.decoder;
    let mut feature = vec![0.0; mlp.input_dim()];
    let mut hidden = vec![0.0; mlp.hidden_dim()];
    let mut out = vec![0.0; mlp.output_dim()];
    let mut entries = Vec::with_capacity(survivors.len());
    let mut semantic = Vec::with_capacity(survivors.len() * k);
    for (_, i, fg, bbox) in survivors {
        scene.field.fuse_into(&gs.positions[i], &mut feature);
        mlp.forward_into(&feature, &mut hidden, &mut out);
        let base = gs.base_colors[i];
        let color = [sigmoid(base[0] + out[0]), sigmoid(base[1] + out[1]), sigmoid(base[2] + out[2])];
        for (s, d) in gs.semantic(i).iter().zip(&out[3..3 + k]) {
            semantic.push(sigmoid(s + d));
        }
        entries.push(Entry {
            source: i,
            cond_center: fg.cond_mean_at(t),
            marginal: fg.marginal_response(t),
            opacity: sigmoid(gs.raw_opacities[i] + out[3 + k]),
            color,
            fg,
            bbox,
        });
    }
    Ok(Prepared { entries, semantic, k })
}
