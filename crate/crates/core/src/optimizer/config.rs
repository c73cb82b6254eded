use alloc::format;

use crate::raster::{ParamGroup, RasterOptions};
use crate::triplane::Fusion;
use crate::{Error, Result};

/// Pruning never leaves fewer Gaussians than this (or the current count,
/// if already smaller).
pub const MIN_GAUSSIANS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
    pub semantic: f64,
    pub texels: f64,
    pub decoder: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 2e-3,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            color: 2.5e-2,
            semantic: 2.5e-2,
            texels: 1e-2,
            decoder: 1e-3,
        }
    }
}

impl LearningRates {
    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Position => self.position,
            ParamGroup::Scale => self.scale,
            ParamGroup::Rotation => self.rotation,
            ParamGroup::Opacity => self.opacity,
            ParamGroup::Color => self.color,
            ParamGroup::Semantic => self.semantic,
            ParamGroup::Texels => self.texels,
            ParamGroup::Decoder => self.decoder,
        }
    }

    pub fn get_mut(&mut self, group: ParamGroup) -> &mut f64 {
        match group {
            ParamGroup::Position => &mut self.position,
            ParamGroup::Scale => &mut self.scale,
            ParamGroup::Rotation => &mut self.rotation,
            ParamGroup::Opacity => &mut self.opacity,
            ParamGroup::Color => &mut self.color,
            ParamGroup::Semantic => &mut self.semantic,
            ParamGroup::Texels => &mut self.texels,
            ParamGroup::Decoder => &mut self.decoder,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: LearningRates,
    /// Weight λ of the SSIM term.
    pub ssim_weight: f64,
    /// Weight β of the semantic MSE term.
    pub semantic_weight: f64,
    /// Iterations between pruning passes; 0 disables pruning.
    pub prune_interval: usize,
    pub prune_alpha_threshold: f64,
    /// Iterations between densification passes; 0 disables densification.
    pub densify_interval: usize,
    /// No densification after this iteration.
    pub densify_until: usize,
    pub densify_grad_threshold: f64,
    pub max_gaussians: usize,
    /// Held-out evaluation interval; 0 evaluates only at the end.
    pub eval_interval: usize,
    pub n_init: usize,
    pub init_opacity: f64,
    pub triplane_resolution: usize,
    pub triplane_channels: usize,
    pub fusion: Fusion,
    pub decoder_hidden: usize,
    /// Amplitude of the uniform texel initialization.
    pub texel_init: f64,
    pub semantic_dim: usize,
    pub k_sigma: f64,
    pub tile_size: usize,
    pub deterministic: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            lr: LearningRates::default(),
            ssim_weight: 0.2,
            semantic_weight: 1.0,
            prune_interval: 500,
            prune_alpha_threshold: 0.005,
            densify_interval: 250,
            densify_until: 1500,
            densify_grad_threshold: 2.5e-3,
            max_gaussians: 50_000,
            eval_interval: 250,
            n_init: 20_000,
            init_opacity: 0.1,
            triplane_resolution: 32,
            triplane_channels: 8,
            fusion: Fusion::Concat,
            decoder_hidden: 64,
            texel_init: 1e-2,
            semantic_dim: 3,
            k_sigma: 3.0,
            tile_size: 16,
            deterministic: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn raster_options(&self) -> RasterOptions {
        RasterOptions { tile_size: self.tile_size, deterministic: self.deterministic }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.ssim_weight) {
            return fail(format!("ssim_weight must lie in [0, 1], got {}", self.ssim_weight));
        }
        if !(self.semantic_weight >= 0.0 && self.semantic_weight.is_finite()) {
            return fail(format!("semantic_weight must be ≥ 0, got {}", self.semantic_weight));
        }
        for g in ParamGroup::ALL {
            let lr = self.lr.get(g);
            if !(lr >= 0.0 && lr.is_finite()) {
                return fail(format!("learning rate for {} must be ≥ 0, got {lr}", g.name()));
            }
        }
        if !(self.prune_alpha_threshold > 0.0 && self.prune_alpha_threshold <= 1.0) {
            return fail(format!("prune_alpha_threshold must lie in (0, 1], got {}", self.prune_alpha_threshold));
        }
        if !(self.densify_grad_threshold > 0.0) {
            return fail(format!("densify_grad_threshold must be > 0, got {}", self.densify_grad_threshold));
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return fail(format!("init_opacity must lie in (0, 1), got {}", self.init_opacity));
        }
        if !(self.k_sigma > 0.0) {
            return fail(format!("k_sigma must be > 0, got {}", self.k_sigma));
        }
        if self.tile_size < 8 {
            return fail(format!("tile_size must be ≥ 8, got {}", self.tile_size));
        }
        if self.n_init == 0 || self.max_gaussians < MIN_GAUSSIANS {
            return fail(format!("n_init must be ≥ 1 and max_gaussians ≥ {MIN_GAUSSIANS}"));
        }
        if self.triplane_resolution == 0 || self.triplane_channels == 0 || self.decoder_hidden == 0 {
            return fail("tri-plane resolution, channels and decoder width must be ≥ 1".into());
        }
        if !(self.texel_init >= 0.0 && self.texel_init.is_finite()) {
            return fail(format!("texel_init must be ≥ 0, got {}", self.texel_init));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
        assert_eq!(LearningRates::default().get(ParamGroup::Opacity), 5e-2);
    }

    #[test]
    fn bad_weights_rejected() {
        let mut c = TrainConfig { ssim_weight: 1.5, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        c.ssim_weight = 0.2;
        c.semantic_weight = -1.0;
        assert!(c.validate().is_err());
        c.semantic_weight = 1.0;
        c.densify_grad_threshold = 0.0;
        assert!(c.validate().is_err());
        c.densify_grad_threshold = 1e-4;
        *c.lr.get_mut(ParamGroup::Texels) = f64::NAN;
        assert!(c.validate().is_err());
    }
}
