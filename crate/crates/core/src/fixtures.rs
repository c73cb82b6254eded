//! Seeded synthetic scenes for tests, benchmarks and the gradient checker.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gaussian::{GaussianSet, RawGaussianParams};
use crate::raster::{Scene, SlicePlaneSpec};
use crate::Axis;
use crate::triplane::{DecoderMlp, Fusion, TriPlaneField};
use crate::Result;

/// Shape of a [`random_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneShape {
    pub gaussians: usize,
    pub semantic_dim: usize,
    pub resolution: usize,
    pub channels: usize,
    pub hidden: usize,
    /// Range of the per-axis standard deviation.
    pub scale: (f64, f64),
    /// Amplitude of the random texels.
    pub texel_amplitude: f64,
}

impl Default for SceneShape {
    fn default() -> Self {
        SceneShape {
            gaussians: 5,
            semantic_dim: 3,
            resolution: 8,
            channels: 4,
            hidden: 16,
            scale: (0.12, 0.3),
            texel_amplitude: 1.0,
        }
    }
}

pub fn random_gaussians(rng: &mut ChaCha8Rng, n: usize, k: usize, scale: (f64, f64)) -> Result<GaussianSet> {
    let (lo, hi) = (scale.0.ln(), scale.1.ln());
    GaussianSet::from_params(
        k,
        (0..n).map(|_| RawGaussianParams {
            position: [0; 3].map(|_| rng.random_range(0.2..0.8)),
            log_scale: [0; 3].map(|_| rng.random_range(lo..hi)),
            rotation: [0; 4].map(|_| rng.random_range(-1.0..1.0)),
            raw_opacity: rng.random_range(-1.5..2.0),
            base_color: [0; 3].map(|_| rng.random_range(-2.0..2.0)),
            base_semantic: (0..k).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>(),
        }),
    )
}

/// Random Gaussians with a random tri-plane field and decoder.
pub fn random_scene(shape: &SceneShape, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = random_gaussians(&mut rng, shape.gaussians, shape.semantic_dim, shape.scale)?;
    let field = TriPlaneField::random(shape.resolution, shape.channels, Fusion::Concat, shape.texel_amplitude, rng.random())?;
    let decoder = DecoderMlp::random(field.feature_dim(), shape.hidden, shape.semantic_dim, rng.random())?;
    Scene::new(gaussians, field, decoder)
}

/// Five Gaussians, `R = 8`, `C = 4`, `H = 16`, three semantic channels.
pub fn gradcheck_scene(seed: u64) -> Result<Scene> {
    random_scene(&SceneShape::default(), seed)
}

/// 8×8 mid-volume slice with culling off, paired with [`gradcheck_scene`].
pub fn gradcheck_spec() -> SlicePlaneSpec {
    SlicePlaneSpec::new(Axis::Z, 0.5, 8, 8).with_k_sigma(f64::INFINITY)
}
