//! Reference renderer: joint 3D response of every Gaussian at every pixel,
//! with no culling, factorization or tiling. Only suitable for small scenes.

use alloc::vec::Vec;

use super::prepare::check_inputs;
use super::{RenderedSlice, Scene, SlicePlaneSpec, MAX_ALPHA};
use crate::gaussian::{activate, evaluate_response, ActivatedGaussian};
use crate::triplane::modulate;
use crate::Result;

pub fn render_slice_bruteforce(scene: &Scene, spec: &SlicePlaneSpec) -> Result<RenderedSlice> {
    check_inputs(scene, spec)?;
    let gs = &scene.gaussians;
    let mut activated: Vec<(f64, usize, ActivatedGaussian)> = Vec::with_capacity(gs.len());
    for i in 0..gs.len() {
        let raw = gs.params(i);
        let residuals = scene.decoder.decode(&scene.field.fuse(&raw.position))?;
        let g = activate(&modulate(&raw, &residuals))?;
        let dist = (g.mean[spec.axis.normal()] - spec.depth).abs();
        activated.push((dist, i, g));
    }
    activated.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let k = scene.semantic_dim();
    let mut out = RenderedSlice::blank(scene, spec);
    for row in 0..spec.height {
        for col in 0..spec.width {
            let (u, v) = spec.pixel_center(col, row);
            let x = spec.axis.point(u, v, spec.depth);
            let px = row * spec.width + col;
            let mut t = 1.0;
            for (_, _, g) in &activated {
                let a = (evaluate_response(g, &x)? * g.opacity).min(MAX_ALPHA);
                let w = a * t;
                for ch in 0..3 {
                    out.intensity[px * 3 + ch] += w * g.color[ch];
                }
                for ch in 0..k {
                    out.semantic[px * k + ch] += w * g.semantic[ch];
                }
                t *= 1.0 - a;
            }
            out.transmittance[px] = t;
        }
    }
    Ok(out)
}
