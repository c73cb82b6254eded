//! Slice rasterizer: ordered alpha compositing of factorized Gaussians and
//! its analytic reverse pass.
//!
//! For a pixel at in-plane position `(u, v)` on the slice at depth `t`,
//! every Gaussian surviving the marginal cull contributes
//! `w_i = a_i · T_i` with `a_i = min(p_i α_i, 1 − 1e-6)`,
//! `T_i = Π_{j<i} (1 − a_j)`, where `p_i` is the factorized response.
//! Intensity is `Σ w_i c_i` and semantics `Σ w_i s_i`, on a black
//! background. Gaussians are composited in ascending distance of their
//! marginal mean to the plane, ties broken by index.

mod backward;
mod brute;
mod forward;
mod par;
mod prepare;
mod tiles;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::gaussian::GaussianSet;
use crate::triplane::{DecoderMlp, TriPlaneField};
use crate::{Axis, Error, Result};

pub use backward::backward_slice;
pub use brute::render_slice_bruteforce;
pub use forward::render_slice;
pub use tiles::{tile_partition, TileLists};

/// Largest per-Gaussian alpha used in compositing.
pub const MAX_ALPHA: f64 = 1.0 - 1e-6;

/// Everything the renderer reads: explicit Gaussians, the tri-plane field
/// and its decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gaussians: GaussianSet,
    pub field: TriPlaneField,
    pub decoder: DecoderMlp,
}

impl Scene {
    pub fn new(gaussians: GaussianSet, field: TriPlaneField, decoder: DecoderMlp) -> Result<Self> {
        let scene = Scene { gaussians, field, decoder };
        scene.check_shapes()?;
        Ok(scene)
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.decoder.input_dim() != self.field.feature_dim() {
            return Err(Error::Config(format!(
                "decoder input {} does not match tri-plane feature size {}",
                self.decoder.input_dim(),
                self.field.feature_dim()
            )));
        }
        if self.decoder.semantic_dim() != self.gaussians.semantic_dim() {
            return Err(Error::Config(format!(
                "decoder emits {} semantic residuals, scene has {} semantic channels",
                self.decoder.semantic_dim(),
                self.gaussians.semantic_dim()
            )));
        }
        Ok(())
    }

    pub fn semantic_dim(&self) -> usize {
        self.gaussians.semantic_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.gaussians.is_finite() && self.field.is_finite() && self.decoder.params().iter().all(|v| v.is_finite())
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        let g = &self.gaussians;
        match group {
            ParamGroup::Position => g.positions.as_flattened(),
            ParamGroup::Scale => g.log_scales.as_flattened(),
            ParamGroup::Rotation => g.rotations.as_flattened(),
            ParamGroup::Opacity => &g.raw_opacities,
            ParamGroup::Color => g.base_colors.as_flattened(),
            ParamGroup::Semantic => &g.base_semantics,
            ParamGroup::Texels => self.field.texels(),
            ParamGroup::Decoder => self.decoder.params(),
        }
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let g = &mut self.gaussians;
        match group {
            ParamGroup::Position => g.positions.as_flattened_mut(),
            ParamGroup::Scale => g.log_scales.as_flattened_mut(),
            ParamGroup::Rotation => g.rotations.as_flattened_mut(),
            ParamGroup::Opacity => &mut g.raw_opacities,
            ParamGroup::Color => g.base_colors.as_flattened_mut(),
            ParamGroup::Semantic => &mut g.base_semantics,
            ParamGroup::Texels => self.field.texels_mut(),
            ParamGroup::Decoder => self.decoder.params_mut(),
        }
    }

    /// Hash of every parameter bit, used to detect a backward pass run
    /// against a scene that changed after its forward pass.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fingerprint::new();
        h.write_usize(self.gaussians.len());
        h.write_usize(self.semantic_dim());
        for group in ParamGroup::ALL {
            for v in self.group(group) {
                h.write_f64(*v);
            }
        }
        h.finish()
    }
}

/// Trainable parameter groups, each a single flat slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Position,
    Scale,
    Rotation,
    Opacity,
    Color,
    Semantic,
    Texels,
    Decoder,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 8] = [
        ParamGroup::Position,
        ParamGroup::Scale,
        ParamGroup::Rotation,
        ParamGroup::Opacity,
        ParamGroup::Color,
        ParamGroup::Semantic,
        ParamGroup::Texels,
        ParamGroup::Decoder,
    ];

    /// Groups stored per Gaussian (resized by pruning and densification).
    pub fn is_per_gaussian(self) -> bool {
        !matches!(self, ParamGroup::Texels | ParamGroup::Decoder)
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::Scale => "scale",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Opacity => "opacity",
            ParamGroup::Color => "color",
            ParamGroup::Semantic => "semantic",
            ParamGroup::Texels => "texels",
            ParamGroup::Decoder => "decoder",
        }
    }

    /// Values per Gaussian for per-Gaussian groups.
    pub fn width(self, semantic_dim: usize) -> usize {
        match self {
            ParamGroup::Position | ParamGroup::Scale | ParamGroup::Color => 3,
            ParamGroup::Rotation => 4,
            ParamGroup::Opacity => 1,
            ParamGroup::Semantic => semantic_dim,
            ParamGroup::Texels | ParamGroup::Decoder => 0,
        }
    }
}

/// Gradient storage co-shaped with a [`Scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    semantic_dim: usize,
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub raw_opacities: Vec<f64>,
    pub base_colors: Vec<[f64; 3]>,
    pub base_semantics: Vec<f64>,
    pub texels: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl GradientBuffer {
    pub fn zeros_like(scene: &Scene) -> Self {
        let n = scene.gaussians.len();
        let k = scene.semantic_dim();
        GradientBuffer {
            semantic_dim: k,
            positions: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            raw_opacities: vec![0.0; n],
            base_colors: vec![[0.0; 3]; n],
            base_semantics: vec![0.0; n * k],
            texels: vec![0.0; scene.field.texel_count()],
            decoder: vec![0.0; scene.decoder.params().len()],
        }
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic_dim
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        match group {
            ParamGroup::Position => self.positions.as_flattened(),
            ParamGroup::Scale => self.log_scales.as_flattened(),
            ParamGroup::Rotation => self.rotations.as_flattened(),
            ParamGroup::Opacity => &self.raw_opacities,
            ParamGroup::Color => self.base_colors.as_flattened(),
            ParamGroup::Semantic => &self.base_semantics,
            ParamGroup::Texels => &self.texels,
            ParamGroup::Decoder => &self.decoder,
        }
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        match group {
            ParamGroup::Position => self.positions.as_flattened_mut(),
            ParamGroup::Scale => self.log_scales.as_flattened_mut(),
            ParamGroup::Rotation => self.rotations.as_flattened_mut(),
            ParamGroup::Opacity => &mut self.raw_opacities,
            ParamGroup::Color => self.base_colors.as_flattened_mut(),
            ParamGroup::Semantic => &mut self.base_semantics,
            ParamGroup::Texels => &mut self.texels,
            ParamGroup::Decoder => &mut self.decoder,
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamGroup::ALL.iter().all(|g| self.group(*g).iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        ParamGroup::ALL.iter().all(|g| self.group(*g).iter().all(|v| *v == 0.0))
    }
}

/// Axis-aligned slice to render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePlaneSpec {
    pub axis: Axis,
    /// Normalized depth along `axis`, in `[0, 1]`.
    pub depth: f64,
    pub width: usize,
    pub height: usize,
    /// Marginal culling threshold in standard deviations; `f64::INFINITY`
    /// disables culling and in-plane truncation.
    pub k_sigma: f64,
}

impl SlicePlaneSpec {
    pub fn new(axis: Axis, depth: f64, width: usize, height: usize) -> Self {
        SlicePlaneSpec { axis, depth, width, height, k_sigma: 3.0 }
    }

    pub fn with_k_sigma(mut self, k_sigma: f64) -> Self {
        self.k_sigma = k_sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("slice must be at least 1×1 pixels".into()));
        }
        if !(0.0..=1.0).contains(&self.depth) {
            return Err(Error::Validation(format!("slice depth {} outside [0, 1]", self.depth)));
        }
        if !(self.k_sigma > 0.0) {
            return Err(Error::Validation(format!("k_sigma must be positive, got {}", self.k_sigma)));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Normalized in-plane coordinates of a pixel center.
    #[inline]
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        ((col as f64 + 0.5) / self.width as f64, (row as f64 + 0.5) / self.height as f64)
    }

    fn hash_into(&self, h: &mut Fingerprint) {
        h.write_usize(self.axis.normal());
        h.write_f64(self.depth);
        h.write_usize(self.width);
        h.write_usize(self.height);
        h.write_f64(self.k_sigma);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterOptions {
    /// Tile edge in pixels (≥ 8).
    pub tile_size: usize,
    /// Merge per-tile gradients in fixed tile order for bitwise
    /// reproducibility. When off (and built with `parallel`) tiles are
    /// reduced in whatever order the thread pool finishes them.
    pub deterministic: bool,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions { tile_size: 16, deterministic: true }
    }
}

/// A rendered slice. Images are row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSlice {
    pub spec: SlicePlaneSpec,
    pub semantic_dim: usize,
    /// `H × W × 3`.
    pub intensity: Vec<f64>,
    /// `H × W × K`.
    pub semantic: Vec<f64>,
    /// Transmittance left after the last contributor, per pixel.
    pub transmittance: Vec<f64>,
    pub(crate) fingerprint: u64,
}

impl RenderedSlice {
    pub(crate) fn blank(scene: &Scene, spec: &SlicePlaneSpec) -> Self {
        let n = spec.pixel_count();
        let k = scene.semantic_dim();
        RenderedSlice {
            spec: *spec,
            semantic_dim: k,
            intensity: vec![0.0; n * 3],
            semantic: vec![0.0; n * k],
            transmittance: vec![1.0; n],
            fingerprint: render_fingerprint(scene, spec),
        }
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    /// Per-pixel mean of the three intensity channels.
    pub fn grayscale(&self) -> Vec<f64> {
        self.intensity.chunks_exact(3).map(|c| (c[0] + c[1] + c[2]) / 3.0).collect()
    }
}

/// Upstream gradients of a scalar loss w.r.t. a rendered slice, shaped like
/// [`RenderedSlice::intensity`] and [`RenderedSlice::semantic`].
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGradients {
    pub intensity: Vec<f64>,
    pub semantic: Vec<f64>,
}

impl PixelGradients {
    pub fn zeros(spec: &SlicePlaneSpec, semantic_dim: usize) -> Self {
        let n = spec.pixel_count();
        PixelGradients { intensity: vec![0.0; 3 * n], semantic: vec![0.0; semantic_dim * n] }
    }
}

pub(crate) fn render_fingerprint(scene: &Scene, spec: &SlicePlaneSpec) -> u64 {
    let mut h = Fingerprint::new();
    h.write_u64(scene.fingerprint());
    spec.hash_into(&mut h);
    h.finish()
}

/// Small multiplicative word hasher (no_std friendly).
pub(crate) struct Fingerprint(u64);

impl Fingerprint {
    pub fn new() -> Self {
        Fingerprint(0xcbf2_9ce4_8422_2325)
    }

    pub fn write_u64(&mut self, x: u64) {
        self.0 = (self.0.rotate_left(5) ^ x).wrapping_mul(0x517c_c1b7_2722_0a95);
    }

    pub fn write_usize(&mut self, x: usize) {
        self.write_u64(x as u64);
    }

    pub fn write_f64(&mut self, x: f64) {
        self.write_u64(x.to_bits());
    }

    pub fn finish(&self) -> u64 {
        let mut x = self.0;
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
        x ^ (x >> 33)
    }
}
