//! `key = value` form of [`TrainConfig`], used by config files and embedded
//! in checkpoints. Floats use Rust's shortest round-trip formatting.

use slicegs_core::optimizer::{LearningRates, TrainConfig};
use slicegs_core::raster::ParamGroup;
use slicegs_core::Fusion;

use super::kv::{parse_bool, parse_value};
use crate::error::{format_err, Result};

fn lr_key(g: ParamGroup) -> String {
    format!("lr_{}", g.name())
}

pub fn fusion_name(f: Fusion) -> &'static str {
    match f {
        Fusion::Concat => "concat",
        Fusion::Sum => "sum",
    }
}

pub fn parse_fusion(s: &str) -> Result<Fusion> {
    match s {
        "concat" => Ok(Fusion::Concat),
        "sum" => Ok(Fusion::Sum),
        _ => Err(format_err(format!("unknown fusion `{s}` (expected concat or sum)"))),
    }
}

pub fn config_text(c: &TrainConfig) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
    put("iterations", c.iterations.to_string());
    for g in ParamGroup::ALL {
        put(&lr_key(g), c.lr.get(g).to_string());
    }
    put("ssim_weight", c.ssim_weight.to_string());
    put("semantic_weight", c.semantic_weight.to_string());
    put("prune_interval", c.prune_interval.to_string());
    put("prune_alpha_threshold", c.prune_alpha_threshold.to_string());
    put("densify_interval", c.densify_interval.to_string());
    put("densify_until", c.densify_until.to_string());
    put("densify_grad_threshold", c.densify_grad_threshold.to_string());
    put("max_gaussians", c.max_gaussians.to_string());
    put("eval_interval", c.eval_interval.to_string());
    put("n_init", c.n_init.to_string());
    put("init_opacity", c.init_opacity.to_string());
    put("triplane_resolution", c.triplane_resolution.to_string());
    put("triplane_channels", c.triplane_channels.to_string());
    put("fusion", fusion_name(c.fusion).to_string());
    put("decoder_hidden", c.decoder_hidden.to_string());
    put("texel_init", c.texel_init.to_string());
    put("semantic_dim", c.semantic_dim.to_string());
    put("k_sigma", c.k_sigma.to_string());
    put("tile_size", c.tile_size.to_string());
    put("deterministic", c.deterministic.to_string());
    put("seed", c.seed.to_string());
    s
}

/// Set one configuration key. Returns `false` for keys that are not part of
/// [`TrainConfig`].
pub fn apply_key(c: &mut TrainConfig, key: &str, value: &str) -> Result<bool> {
    let v = value;
    match key {
        "iterations" => c.iterations = parse_value(key, v)?,
        "ssim_weight" => c.ssim_weight = parse_value(key, v)?,
        "semantic_weight" => c.semantic_weight = parse_value(key, v)?,
        "prune_interval" => c.prune_interval = parse_value(key, v)?,
        "prune_alpha_threshold" => c.prune_alpha_threshold = parse_value(key, v)?,
        "densify_interval" => c.densify_interval = parse_value(key, v)?,
        "densify_until" => c.densify_until = parse_value(key, v)?,
        "densify_grad_threshold" => c.densify_grad_threshold = parse_value(key, v)?,
        "max_gaussians" => c.max_gaussians = parse_value(key, v)?,
        "eval_interval" => c.eval_interval = parse_value(key, v)?,
        "n_init" => c.n_init = parse_value(key, v)?,
        "init_opacity" => c.init_opacity = parse_value(key, v)?,
        "triplane_resolution" => c.triplane_resolution = parse_value(key, v)?,
        "triplane_channels" => c.triplane_channels = parse_value(key, v)?,
        "fusion" => c.fusion = parse_fusion(v)?,
        "decoder_hidden" => c.decoder_hidden = parse_value(key, v)?,
        "texel_init" => c.texel_init = parse_value(key, v)?,
        "semantic_dim" => c.semantic_dim = parse_value(key, v)?,
        "k_sigma" => c.k_sigma = parse_value(key, v)?,
        "tile_size" => c.tile_size = parse_value(key, v)?,
        "deterministic" => c.deterministic = parse_bool(key, v)?,
        "seed" => c.seed = parse_value(key, v)?,
        _ => match ParamGroup::ALL.into_iter().find(|g| lr_key(*g) == key) {
            Some(g) => *c.lr.get_mut(g) = parse_value(key, v)?,
            None => return Ok(false),
        },
    }
    Ok(true)
}

pub fn parse_config(pairs: &[(String, String)]) -> Result<TrainConfig> {
    let mut c = TrainConfig { lr: LearningRates::default(), ..TrainConfig::default() };
    for (k, v) in pairs {
        if !apply_key(&mut c, k, v)? {
            return Err(format_err(format!("unknown configuration key `{k}`")));
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::kv;

    #[test]
    fn round_trip_is_exact() {
        let mut c = TrainConfig { k_sigma: f64::INFINITY, seed: u64::MAX, fusion: Fusion::Sum, ..TrainConfig::default() };
        c.lr.texels = 0.1 + 0.2;
        c.ssim_weight = 1.0 / 3.0;
        let back = parse_config(&kv::parse(&config_text(&c)).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.lr.texels.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn unknown_and_bad_keys() {
        assert!(parse_config(&kv::parse("colour = red").unwrap()).is_err());
        assert!(parse_config(&kv::parse("iterations = -3").unwrap()).is_err());
        assert!(parse_config(&kv::parse("fusion = product").unwrap()).is_err());
    }
}
