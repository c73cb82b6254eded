//! Tri-plane feature field and the decoder that turns its features into
//! appearance residuals for each Gaussian.
//!
//! Features are stored on three axis-aligned planes (xy, yz, xz) of
//! `R × R × C` texels each, so storage grows as `3·R²·C` rather than the
//! `R³·C` of a dense grid. A point is projected onto each plane, sampled
//! bilinearly (texel centers at `(i + 0.5) / R`, clamped at the edges) and
//! the three samples are fused before a one-hidden-layer MLP decodes them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gaussian::RawGaussianParams;
use crate::{Error, Result};

/// How the three plane samples are combined into one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fusion {
    /// `[xy; yz; xz]`, length `3C`.
    #[default]
    Concat,
    /// `xy + yz + xz`, length `C`.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Xy,
    Yz,
    Xz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Yz, Plane::Xz];

    /// World coordinate indices sampled along the plane's columns and rows.
    pub fn coords(self) -> (usize, usize) {
        match self {
            Plane::Xy => (0, 1),
            Plane::Yz => (1, 2),
            Plane::Xz => (0, 2),
        }
    }
}

/// The four texels and weights of a bilinear lookup, with the weights'
/// derivatives w.r.t. the two query coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub texel: [usize; 4],
    pub weight: [f64; 4],
    pub d_weight_da: [f64; 4],
    pub d_weight_db: [f64; 4],
}

fn axis_lookup(resolution: usize, coord: f64) -> (usize, usize, f64, f64) {
    let x = coord.clamp(0.0, 1.0) * resolution as f64 - 0.5;
    let last = (resolution - 1) as f64;
    if x <= 0.0 {
        (0, 0, 0.0, 0.0)
    } else if x >= last {
        (resolution - 1, resolution - 1, 0.0, 0.0)
    } else {
        let i0 = x.floor();
        let i = i0 as usize;
        (i, i + 1, x - i0, resolution as f64)
    }
}

pub(crate) fn stencil(resolution: usize, a: f64, b: f64) -> Stencil {
    let (i0, i1, fa, dfa) = axis_lookup(resolution, a);
    let (j0, j1, fb, dfb) = axis_lookup(resolution, b);
    let r = resolution;
    Stencil {
        texel: [j0 * r + i0, j0 * r + i1, j1 * r + i0, j1 * r + i1],
        weight: [(1.0 - fa) * (1.0 - fb), fa * (1.0 - fb), (1.0 - fa) * fb, fa * fb],
        d_weight_da: [-dfa * (1.0 - fb), dfa * (1.0 - fb), -dfa * fb, dfa * fb],
        d_weight_db: [-(1.0 - fa) * dfb, -fa * dfb, (1.0 - fa) * dfb, fa * dfb],
    }
}

/// Bilinearly sample one `R × R × C` plane at `(a, b) ∈ [0, 1]²`.
pub fn sample_plane(plane: &[f64], resolution: usize, channels: usize, a: f64, b: f64) -> Vec<f64> {
    let mut out = vec![0.0; channels];
    sample_into(plane, channels, &stencil(resolution, a, b), &mut out);
    out
}

fn sample_into(plane: &[f64], channels: usize, s: &Stencil, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..4 {
        let w = s.weight[k];
        if w == 0.0 {
            continue;
        }
        let base = s.texel[k] * channels;
        for (o, t) in out.iter_mut().zip(&plane[base..base + channels]) {
            *o += w * t;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriPlaneField {
    resolution: usize,
    channels: usize,
    fusion: Fusion,
    /// xy, yz and xz planes back to back, each `R × R × C` row-major.
    texels: Vec<f64>,
}

impl TriPlaneField {
    pub fn zeros(resolution: usize, channels: usize, fusion: Fusion) -> Result<Self> {
        if resolution == 0 || channels == 0 {
            return Err(Error::Config(format!(
                "tri-plane needs resolution and channels ≥ 1 (got {resolution}, {channels})"
            )));
        }
        let n = resolution * resolution * channels;
        Ok(TriPlaneField { resolution, channels, fusion, texels: vec![0.0; 3 * n] })
    }

    /// Build from a texel buffer holding the xy, yz and xz planes in order.
    pub fn from_texels(resolution: usize, channels: usize, fusion: Fusion, texels: Vec<f64>) -> Result<Self> {
        let mut field = Self::zeros(resolution, channels, fusion)?;
        if texels.len() != field.texels.len() {
            return Err(Error::Shape(format!("tri-plane expects {} texel values, got {}", field.texels.len(), texels.len())));
        }
        field.texels = texels;
        Ok(field)
    }

    /// Texels drawn uniformly from `[-amplitude, amplitude)`.
    pub fn random(resolution: usize, channels: usize, fusion: Fusion, amplitude: f64, seed: u64) -> Result<Self> {
        let mut field = Self::zeros(resolution, channels, fusion)?;
        if amplitude > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            field.texels.iter_mut().for_each(|t| *t = rng.random_range(-amplitude..amplitude));
        }
        Ok(field)
    }

    fn plane_len(&self) -> usize {
        self.resolution * self.resolution * self.channels
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn fusion(&self) -> Fusion {
        self.fusion
    }

    /// Length of the fused feature vector fed to the decoder.
    pub fn feature_dim(&self) -> usize {
        match self.fusion {
            Fusion::Concat => 3 * self.channels,
            Fusion::Sum => self.channels,
        }
    }

    /// Total allocated texel values across the three planes.
    pub fn texel_count(&self) -> usize {
        self.texels.len()
    }

    pub fn plane(&self, p: Plane) -> &[f64] {
        let n = self.plane_len();
        &self.texels[p as usize * n..(p as usize + 1) * n]
    }

    pub fn plane_mut(&mut self, p: Plane) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.texels[p as usize * n..(p as usize + 1) * n]
    }

    pub fn texels(&self) -> &[f64] {
        &self.texels
    }

    pub fn texels_mut(&mut self) -> &mut [f64] {
        &mut self.texels
    }

    pub fn is_finite(&self) -> bool {
        self.texels.iter().all(|v| v.is_finite())
    }

    /// Project `p` onto the three planes, sample and fuse.
    pub fn fuse(&self, p: &[f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim()];
        self.fuse_into(p, &mut out);
        out
    }

    pub(crate) fn fuse_into(&self, p: &[f64; 3], out: &mut [f64]) {
        let c = self.channels;
        let mut tmp = [0.0; 64];
        let mut heap;
        let scratch: &mut [f64] = if c <= tmp.len() {
            &mut tmp[..c]
        } else {
            heap = vec![0.0; c];
            &mut heap
        };
        if self.fusion == Fusion::Sum {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        for (k, plane) in Plane::ALL.into_iter().enumerate() {
            let (ia, ib) = plane.coords();
            let s = stencil(self.resolution, p[ia], p[ib]);
            let texels = self.plane(plane);
            match self.fusion {
                Fusion::Concat => sample_into(texels, c, &s, &mut out[k * c..(k + 1) * c]),
                Fusion::Sum => {
                    sample_into(texels, c, &s, scratch);
                    for (o, v) in out.iter_mut().zip(scratch.iter()) {
                        *o += v;
                    }
                }
            }
        }
    }

    /// Scatter a feature gradient back onto texels (accumulating into
    /// `grad_texels`, laid out like [`Self::texels`]) and return the gradient
    /// w.r.t. the query point.
    pub(crate) fn fuse_backward(&self, p: &[f64; 3], d_feature: &[f64], grad_texels: &mut [f64]) -> [f64; 3] {
        let c = self.channels;
        let n = self.plane_len();
        let mut d_point = [0.0; 3];
        for (k, plane) in Plane::ALL.into_iter().enumerate() {
            let (ia, ib) = plane.coords();
            let s = stencil(self.resolution, p[ia], p[ib]);
            let g = match self.fusion {
                Fusion::Concat => &d_feature[k * c..(k + 1) * c],
                Fusion::Sum => d_feature,
            };
            for corner in 0..4 {
                let base = k * n + s.texel[corner] * c;
                let texels = &self.texels[base..base + c];
                let w = s.weight[corner];
                let mut dot = 0.0;
                for ch in 0..c {
                    grad_texels[base + ch] += w * g[ch];
                    dot += g[ch] * texels[ch];
                }
                d_point[ia] += s.d_weight_da[corner] * dot;
                d_point[ib] += s.d_weight_db[corner] * dot;
            }
        }
        d_point
    }
}

/// Appearance residuals added to a Gaussian's raw (pre-activation) params.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub color: [f64; 3],
    pub semantic: Vec<f64>,
    pub opacity: f64,
}

impl Residuals {
    fn from_output(out: &[f64]) -> Self {
        let k = out.len() - 4;
        Residuals { color: [out[0], out[1], out[2]], semantic: out[3..3 + k].to_vec(), opacity: out[3 + k] }
    }
}

/// One hidden layer, ReLU, linear output of `3 + K + 1` residuals
/// (color, semantic, opacity). All weights live in one flat buffer laid out
/// as `W1 (H × in), b1 (H), W2 (out × H), b2 (out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderMlp {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

impl DecoderMlp {
    pub fn param_count(input_dim: usize, hidden_dim: usize, semantic_dim: usize) -> usize {
        let out = 4 + semantic_dim;
        hidden_dim * input_dim + hidden_dim + out * hidden_dim + out
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, semantic_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("decoder needs non-empty input and hidden layers".into()));
        }
        Ok(DecoderMlp {
            input_dim,
            hidden_dim,
            output_dim: 4 + semantic_dim,
            params: vec![0.0; Self::param_count(input_dim, hidden_dim, semantic_dim)],
        })
    }

    /// Small uniform weights, seeded. The first layer is scaled by
    /// `1/√in`, the output layer by `0.1/√H`, so the initial residuals are
    /// close to zero. Hidden biases are drawn too: with all-zero planes a
    /// zero bias would leave every ReLU exactly at its kink.
    pub fn random(input_dim: usize, hidden_dim: usize, semantic_dim: usize, seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(input_dim, hidden_dim, semantic_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s1 = 1.0 / (input_dim as f64).sqrt();
        let s2 = 0.1 / (hidden_dim as f64).sqrt();
        let (w1, b1, w2, _b2) = mlp.offsets();
        for v in &mut mlp.params[w1..b1] {
            *v = rng.random_range(-s1..s1);
        }
        for v in &mut mlp.params[b1..w2] {
            *v = rng.random_range(-s1..s1);
        }
        let b2 = mlp.offsets().3;
        for v in &mut mlp.params[w2..b2] {
            *v = rng.random_range(-s2..s2);
        }
        Ok(mlp)
    }

    pub fn from_params(input_dim: usize, hidden_dim: usize, semantic_dim: usize, params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(input_dim, hidden_dim, semantic_dim)?;
        if params.len() != mlp.params.len() {
            return Err(Error::Shape(format!(
                "decoder expects {} parameters, got {}",
                mlp.params.len(),
                params.len()
            )));
        }
        mlp.params = params;
        Ok(mlp)
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let w1 = 0;
        let b1 = self.hidden_dim * self.input_dim;
        let w2 = b1 + self.hidden_dim;
        let b2 = w2 + self.output_dim * self.hidden_dim;
        (w1, b1, w2, b2)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn semantic_dim(&self) -> usize {
        self.output_dim - 4
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn decode(&self, feature: &[f64]) -> Result<Residuals> {
        if feature.len() != self.input_dim {
            return Err(Error::Config(format!(
                "decoder expects a {}-dim feature, got {}",
                self.input_dim,
                feature.len()
            )));
        }
        let mut hidden = vec![0.0; self.hidden_dim];
        let mut out = vec![0.0; self.output_dim];
        self.forward_into(feature, &mut hidden, &mut out);
        Ok(Residuals::from_output(&out))
    }

    /// Writes hidden pre-activations and the output residual vector.
    pub(crate) fn forward_into(&self, feature: &[f64], hidden_pre: &mut [f64], out: &mut [f64]) {
        let (w1, b1, w2, b2) = self.offsets();
        let p = &self.params;
        for h in 0..self.hidden_dim {
            let row = &p[w1 + h * self.input_dim..w1 + (h + 1) * self.input_dim];
            let mut acc = p[b1 + h];
            for (w, x) in row.iter().zip(feature) {
                acc += w * x;
            }
            hidden_pre[h] = acc;
        }
        for o in 0..self.output_dim {
            let row = &p[w2 + o * self.hidden_dim..w2 + (o + 1) * self.hidden_dim];
            let mut acc = p[b2 + o];
            for (w, z) in row.iter().zip(hidden_pre.iter()) {
                if *z > 0.0 {
                    acc += w * z;
                }
            }
            out[o] = acc;
        }
    }

    /// Accumulates weight gradients into `d_params` and overwrites
    /// `d_feature`. `hidden_pre` must come from `forward_into` on `feature`.
    pub(crate) fn backward(&self, feature: &[f64], hidden_pre: &[f64], d_out: &[f64], d_params: &mut [f64], d_feature: &mut [f64]) {
        let (w1, b1, w2, b2) = self.offsets();
        let p = &self.params;
        d_feature.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..self.output_dim {
            let g = d_out[o];
            if g == 0.0 {
                continue;
            }
            d_params[b2 + o] += g;
            for h in 0..self.hidden_dim {
                let z = hidden_pre[h];
                if z > 0.0 {
                    d_params[w2 + o * self.hidden_dim + h] += g * z;
                }
            }
        }
        for h in 0..self.hidden_dim {
            if hidden_pre[h] <= 0.0 {
                continue;
            }
            let mut g = 0.0;
            for o in 0..self.output_dim {
                g += d_out[o] * p[w2 + o * self.hidden_dim + h];
            }
            if g == 0.0 {
                continue;
            }
            d_params[b1 + h] += g;
            let row = w1 + h * self.input_dim;
            for i in 0..self.input_dim {
                d_params[row + i] += g * feature[i];
                d_feature[i] += g * p[row + i];
            }
        }
    }
}

/// Add decoder residuals to the appearance parameters. Geometry is left
/// untouched.
pub fn modulate(raw: &RawGaussianParams, residuals: &Residuals) -> RawGaussianParams {
    let mut out = raw.clone();
    for c in 0..3 {
        out.base_color[c] += residuals.color[c];
    }
    for (s, d) in out.base_semantic.iter_mut().zip(&residuals.semantic) {
        *s += d;
    }
    out.raw_opacity += residuals.opacity;
    out
}

/// Gradients produced by [`triplane_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct TriPlaneGradients {
    pub texels: Vec<f64>,
    pub decoder: Vec<f64>,
    pub position: [f64; 3],
}

/// Reverse pass of sample → fuse → decode for one query point, given the
/// gradient of a loss w.r.t. the residual vector (color, semantic, opacity).
pub fn triplane_backward(p: &[f64; 3], field: &TriPlaneField, mlp: &DecoderMlp, d_residuals: &[f64]) -> Result<TriPlaneGradients> {
    if mlp.input_dim() != field.feature_dim() || d_residuals.len() != mlp.output_dim() {
        return Err(Error::Config("tri-plane and decoder shapes disagree".into()));
    }
    let mut feature = vec![0.0; field.feature_dim()];
    field.fuse_into(p, &mut feature);
    let mut hidden = vec![0.0; mlp.hidden_dim()];
    let mut out = vec![0.0; mlp.output_dim()];
    mlp.forward_into(&feature, &mut hidden, &mut out);

    let mut grads = TriPlaneGradients {
        texels: vec![0.0; field.texel_count()],
        decoder: vec![0.0; mlp.params().len()],
        position: [0.0; 3],
    };
    let mut d_feature = vec![0.0; feature.len()];
    mlp.backward(&feature, &hidden, d_residuals, &mut grads.decoder, &mut d_feature);
    grads.position = field.fuse_backward(p, &d_feature, &mut grads.texels);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_field(r: usize, c: usize, seed: u64) -> TriPlaneField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let texels = (0..3 * r * r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        TriPlaneField::from_texels(r, c, Fusion::Concat, texels).unwrap()
    }

    #[test]
    fn texel_center_returns_texel() {
        let f = ramp_field(4, 2, 1);
        let plane = f.plane(Plane::Xy);
        // Texel (i=2, j=1) is centered at (2.5/4, 1.5/4).
        let s = sample_plane(plane, 4, 2, 2.5 / 4.0, 1.5 / 4.0);
        let base = (4 + 2) * 2;
        assert_eq!(s, plane[base..base + 2].to_vec());
    }

    #[test]
    fn cell_center_averages_corners() {
        let plane = [0.0, 1.0, 1.0, 2.0];
        let s = sample_plane(&plane, 2, 1, 0.5, 0.5);
        assert!((s[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_queries_clamp() {
        let f = ramp_field(8, 3, 2);
        let p = f.plane(Plane::Yz);
        assert_eq!(sample_plane(p, 8, 3, -0.1, 0.5), sample_plane(p, 8, 3, 0.0, 0.5));
        assert_eq!(sample_plane(p, 8, 3, 1.3, 0.2), sample_plane(p, 8, 3, 1.0, 0.2));
    }

    #[test]
    fn sampling_is_linear_within_a_cell() {
        let f = ramp_field(8, 3, 3);
        let p = f.plane(Plane::Xz);
        // Texel centers at 2.5/8 and 3.5/8 bound one cell along a.
        let b = 0.41;
        let lo = sample_plane(p, 8, 3, 2.5 / 8.0, b);
        let hi = sample_plane(p, 8, 3, 3.5 / 8.0, b);
        let mid = sample_plane(p, 8, 3, 3.0 / 8.0, b);
        for ch in 0..3 {
            assert!((mid[ch] - 0.5 * (lo[ch] + hi[ch])).abs() < 1e-14);
        }
    }

    #[test]
    fn fuse_shapes_and_plane_independence() {
        let f = TriPlaneField::zeros(8, 4, Fusion::Concat).unwrap();
        assert_eq!(f.fuse(&[0.3, 0.4, 0.5]).len(), 12);
        assert!(f.fuse(&[0.3, 0.4, 0.5]).iter().all(|v| *v == 0.0));

        let f = ramp_field(8, 4, 4);
        let bottom = f.fuse(&[0.3, 0.6, 0.0]);
        let top = f.fuse(&[0.3, 0.6, 1.0]);
        assert_eq!(bottom[..4], top[..4]);
        assert_ne!(bottom[4..], top[4..]);

        let sum = TriPlaneField::zeros(8, 4, Fusion::Sum).unwrap();
        assert_eq!(sum.fuse(&[0.1, 0.2, 0.3]).len(), 4);
    }

    #[test]
    fn storage_is_three_planes() {
        for r in [32, 128, 256] {
            let f = TriPlaneField::zeros(r, 8, Fusion::Concat).unwrap();
            assert_eq!(f.texel_count(), 3 * r * r * 8);
        }
    }

    #[test]
    fn zero_decoder_gives_zero_residuals() {
        let mlp = DecoderMlp::zeros(6, 4, 3).unwrap();
        let r = mlp.decode(&[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]).unwrap();
        assert_eq!(r, Residuals { color: [0.0; 3], semantic: vec![0.0; 3], opacity: 0.0 });
        assert!(matches!(mlp.decode(&[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn toy_decoder_by_hand() {
        // in = 1, H = 2, K = 0 → out = 4.
        // h0 = relu(2x + 1), h1 = relu(-x + 0.5)
        // out_o = a_o · h0 + b_o · h1 + c_o
        let params = vec![
            2.0, -1.0, // W1
            1.0, 0.5, // b1
            1.0, 0.0, // W2 row 0
            0.0, 1.0, // row 1
            1.0, 1.0, // row 2
            -1.0, 2.0, // row 3
            0.0, 0.0, 0.0, 0.25, // b2
        ];
        let mlp = DecoderMlp::from_params(1, 2, 0, params).unwrap();
        // x = 1: h0 = 3, h1 = relu(-0.5) = 0 (gated off).
        let r = mlp.decode(&[1.0]).unwrap();
        assert_eq!(r.color, [3.0, 0.0, 3.0]);
        assert_eq!(r.opacity, -3.0 + 0.25);
        // x = 0: h0 = 1, h1 = 0.5.
        let r = mlp.decode(&[0.0]).unwrap();
        assert_eq!(r.color, [1.0, 0.5, 1.5]);
        assert_eq!(r.opacity, -1.0 + 1.0 + 0.25);
    }

    #[test]
    fn modulation_adds_in_raw_space() {
        let raw = RawGaussianParams {
            position: [0.1, 0.2, 0.3],
            log_scale: [-3.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            raw_opacity: 0.0,
            base_color: [0.5, -0.5, 1.0],
            base_semantic: vec![0.0, 1.0],
        };
        let zero = Residuals { color: [0.0; 3], semantic: vec![0.0; 2], opacity: 0.0 };
        assert_eq!(modulate(&raw, &zero), raw);
        let r = Residuals { color: [1.0, 1.0, -1.0], semantic: vec![0.5, -0.5], opacity: 800.0 };
        let m = modulate(&raw, &r);
        assert_eq!(m.base_color, [1.5, 0.5, 0.0]);
        assert_eq!(m.base_semantic, vec![0.5, 0.5]);
        assert_eq!((m.position, m.log_scale, m.rotation), (raw.position, raw.log_scale, raw.rotation));
        assert_eq!(crate::sigmoid(m.raw_opacity), 1.0);
    }

    #[test]
    fn backward_splits_by_bilinear_weights() {
        let r = 4;
        let field = TriPlaneField::zeros(r, 1, Fusion::Concat).unwrap();
        let d_feature = [1.0, 0.0, 0.0];
        // Texel center: full weight on one texel of the xy plane.
        let mut g = vec![0.0; 48];
        field.fuse_backward(&[1.5 / 4.0, 2.5 / 4.0, 0.5], &d_feature, &mut g);
        assert_eq!(g[2 * r + 1], 1.0);
        assert_eq!(g.iter().sum::<f64>(), 1.0);
        // Cell center: a quarter on each corner.
        let mut g = vec![0.0; 48];
        field.fuse_backward(&[0.5, 0.5, 0.5], &d_feature, &mut g);
        for idx in [r + 1, r + 2, 2 * r + 1, 2 * r + 2] {
            assert!((g[idx] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let field = ramp_field(8, 4, 5);
        let mlp = DecoderMlp::random(12, 16, 3, 9).unwrap();
        let g = triplane_backward(&[0.3, 0.5, 0.7], &field, &mlp, &[0.0; 7]).unwrap();
        assert!(g.texels.iter().all(|v| *v == 0.0));
        assert!(g.decoder.iter().all(|v| *v == 0.0));
        assert_eq!(g.position, [0.0; 3]);
    }

    /// Scalar probe `L = Σ_o w_o · residual_o` for fixed weights.
    fn probe(field: &TriPlaneField, mlp: &DecoderMlp, p: &[f64; 3], w: &[f64]) -> f64 {
        let r = mlp.decode(&field.fuse(p)).unwrap();
        let mut out = Vec::new();
        out.extend_from_slice(&r.color);
        out.extend_from_slice(&r.semantic);
        out.push(r.opacity);
        out.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (r, c, h) = (8, 4, 16);
        let mut field = ramp_field(r, c, 6);
        let mut mlp = DecoderMlp::random(3 * c, h, 3, 10).unwrap();
        let p = [0.37, 0.52, 0.71];
        let w = [0.3, -0.8, 0.5, 1.1, -0.2, 0.7, -1.3];
        let g = triplane_backward(&p, &field, &mlp, &w).unwrap();
        let step = 1e-6;

        let mut worst: f64 = 0.0;
        for i in 0..field.texel_count() {
            let orig = field.texels()[i];
            field.texels_mut()[i] = orig + step;
            let lp = probe(&field, &mlp, &p, &w);
            field.texels_mut()[i] = orig - step;
            let lm = probe(&field, &mlp, &p, &w);
            field.texels_mut()[i] = orig;
            worst = worst.max(rel_err(g.texels[i], (lp - lm) / (2.0 * step)));
        }
        for i in 0..mlp.params().len() {
            let orig = mlp.params()[i];
            mlp.params_mut()[i] = orig + step;
            let lp = probe(&field, &mlp, &p, &w);
            mlp.params_mut()[i] = orig - step;
            let lm = probe(&field, &mlp, &p, &w);
            mlp.params_mut()[i] = orig;
            worst = worst.max(rel_err(g.decoder[i], (lp - lm) / (2.0 * step)));
        }
        for k in 0..3 {
            let (mut pp, mut pm) = (p, p);
            pp[k] += step;
            pm[k] -= step;
            let n = (probe(&field, &mlp, &pp, &w) - probe(&field, &mlp, &pm, &w)) / (2.0 * step);
            worst = worst.max(rel_err(g.position[k], n));
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }
}
