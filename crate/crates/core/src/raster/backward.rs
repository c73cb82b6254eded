//! Reverse pass of the slice compositor.
//!
//! Per pixel the forward sequence is replayed to recover `(p_i, a_i, T_i)`,
//! then walked back to front. With `U_i = Σ_{j>i} a_j Π_{i<k<j}(1 − a_k) x_j`
//! (the normalized color composited behind `i`) the alpha gradient is
//! `∂out/∂a_i = T_i (x_i − U_i)`, which needs no division by `1 − a_i`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::forward::bin;
use super::par::map_indexed;
use super::prepare::{check_inputs, prepare, Prepared};
use super::tiles::TileLists;
use super::{render_fingerprint, GradientBuffer, PixelGradients, RasterOptions, RenderedSlice, Scene, SlicePlaneSpec, MAX_ALPHA};
use crate::gaussian::{covariance_backward, covariance_factors};
use crate::{Error, Result};

const MU: usize = 0;
const SIGMA: usize = 3;
const ALPHA: usize = 12;
const COLOR: usize = 13;
const SEMANTIC: usize = 16;

fn stride(k: usize) -> usize {
    SEMANTIC + k
}

struct Contribution {
    slot: usize,
    entry: usize,
    p: f64,
    a: f64,
    t: f64,
    clamped: bool,
}

/// Analytic gradients of `Σ upstream · rendered` w.r.t. every parameter.
pub fn backward_slice(
    scene: &Scene,
    spec: &SlicePlaneSpec,
    opts: &RasterOptions,
    forward: &RenderedSlice,
    upstream: &PixelGradients,
) -> Result<GradientBuffer> {
    check_inputs(scene, spec)?;
    if forward.spec != *spec || forward.fingerprint != render_fingerprint(scene, spec) {
        return Err(Error::StaleCache);
    }
    let k = scene.semantic_dim();
    let n = spec.pixel_count();
    if upstream.intensity.len() != 3 * n || upstream.semantic.len() != k * n {
        return Err(Error::Shape(format!(
            "upstream gradients must hold {} intensity and {} semantic values",
            3 * n,
            k * n
        )));
    }

    let prepared = prepare(scene, spec)?;
    let tiles = bin(&prepared, spec, opts)?;
    let dense = accumulate(&prepared, &tiles, spec, upstream, opts.deterministic);
    Ok(chain_to_parameters(scene, &prepared, &dense))
}

#[cfg(feature = "parallel")]
fn accumulate(prepared: &Prepared, tiles: &TileLists, spec: &SlicePlaneSpec, upstream: &PixelGradients, deterministic: bool) -> Vec<f64> {
    if deterministic {
        return accumulate_ordered(prepared, tiles, spec, upstream);
    }
    use rayon::prelude::*;
    let s = stride(prepared.k);
    let size = prepared.entries.len() * s;
    (0..tiles.tile_count())
        .into_par_iter()
        .fold(
            || vec![0.0; size],
            |mut dense, tile| {
                let local = backward_tile(prepared, tiles, spec, upstream, tile);
                scatter(&mut dense, &tiles.lists[tile], &local, s);
                dense
            },
        )
        .reduce(
            || vec![0.0; size],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

#[cfg(not(feature = "parallel"))]
fn accumulate(prepared: &Prepared, tiles: &TileLists, spec: &SlicePlaneSpec, upstream: &PixelGradients, _deterministic: bool) -> Vec<f64> {
    accumulate_ordered(prepared, tiles, spec, upstream)
}

fn accumulate_ordered(prepared: &Prepared, tiles: &TileLists, spec: &SlicePlaneSpec, upstream: &PixelGradients) -> Vec<f64> {
    let s = stride(prepared.k);
    let locals = map_indexed(tiles.tile_count(), |tile| backward_tile(prepared, tiles, spec, upstream, tile));
    let mut dense = vec![0.0; prepared.entries.len() * s];
    for (tile, local) in locals.iter().enumerate() {
        scatter(&mut dense, &tiles.lists[tile], local, s);
    }
    dense
}

fn scatter(dense: &mut [f64], list: &[u32], local: &[f64], s: usize) {
    for (slot, &e) in list.iter().enumerate() {
        let dst = &mut dense[e as usize * s..(e as usize + 1) * s];
        for (d, v) in dst.iter_mut().zip(&local[slot * s..(slot + 1) * s]) {
            *d += v;
        }
    }
}

/// Per-tile gradients w.r.t. (μ, Σ, α, c, s) of each listed Gaussian, in
/// list-slot order.
fn backward_tile(prepared: &Prepared, tiles: &TileLists, spec: &SlicePlaneSpec, upstream: &PixelGradients, tile: usize) -> Vec<f64> {
    let k = prepared.k;
    let s = stride(k);
    let list = &tiles.lists[tile];
    let mut local = vec![0.0; list.len() * s];
    if list.is_empty() {
        return local;
    }
    let (c0, c1, r0, r1) = tiles.tile_rect(tile, spec.width, spec.height);
    let t_depth = spec.depth;
    let mut seq: Vec<Contribution> = Vec::with_capacity(list.len());
    let mut behind = vec![0.0; 3 + k];
    let mut g = vec![0.0; 3 + k];

    for row in r0..r1 {
        for col in c0..c1 {
            let px = row * spec.width + col;
            g[..3].copy_from_slice(&upstream.intensity[px * 3..px * 3 + 3]);
            g[3..].copy_from_slice(&upstream.semantic[px * k..(px + 1) * k]);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let (u, v) = spec.pixel_center(col, row);

            seq.clear();
            let mut t = 1.0;
            for (slot, &e) in list.iter().enumerate() {
                let entry = &prepared.entries[e as usize];
                if !entry.bbox.contains(col, row) {
                    continue;
                }
                let p = entry.response(u, v);
                let raw = p * entry.opacity;
                let a = raw.min(MAX_ALPHA);
                seq.push(Contribution { slot, entry: e as usize, p, a, t, clamped: raw > MAX_ALPHA });
                t *= 1.0 - a;
            }

            behind.iter_mut().for_each(|x| *x = 0.0);
            for c in seq.iter().rev() {
                let entry = &prepared.entries[c.entry];
                let sem = prepared.semantic(c.entry);
                let w = c.a * c.t;
                let dst = &mut local[c.slot * s..(c.slot + 1) * s];

                let mut d_a = 0.0;
                for ch in 0..3 {
                    dst[COLOR + ch] += g[ch] * w;
                    d_a += g[ch] * (entry.color[ch] - behind[ch]);
                }
                for ch in 0..k {
                    dst[SEMANTIC + ch] += g[3 + ch] * w;
                    d_a += g[3 + ch] * (sem[ch] - behind[3 + ch]);
                }
                d_a *= c.t;

                for ch in 0..3 {
                    behind[ch] = c.a * entry.color[ch] + (1.0 - c.a) * behind[ch];
                }
                for ch in 0..k {
                    behind[3 + ch] = c.a * sem[ch] + (1.0 - c.a) * behind[3 + ch];
                }

                if c.clamped {
                    continue;
                }
                dst[ALPHA] += d_a * c.p;
                let d_p = d_a * entry.opacity;
                if d_p == 0.0 {
                    continue;
                }
                // p = exp(-½ xᵀΣ⁻¹x):  ∂p/∂μ = p·y,  ∂p/∂Σ = ½ p·y yᵀ,  y = Σ⁻¹x.
                let fg = &entry.fg;
                let y = fg.precision_times_offset(u - fg.plane_mean[0], v - fg.plane_mean[1], t_depth - fg.marginal_mean);
                let scale = d_p * c.p;
                for i in 0..3 {
                    dst[MU + i] += scale * y[i];
                    for j in 0..3 {
                        dst[SIGMA + 3 * i + j] += 0.5 * scale * y[i] * y[j];
                    }
                }
            }
        }
    }
    local
}

fn chain_to_parameters(scene: &Scene, prepared: &Prepared, dense: &[f64]) -> GradientBuffer {
    let k = prepared.k;
    let s = stride(k);
    let gs = &scene.gaussians;
    let mlp = &scene.decoder;
    let mut grads = GradientBuffer::zeros_like(scene);
    let mut feature = vec![0.0; mlp.input_dim()];
    let mut hidden = vec![0.0; mlp.hidden_dim()];
    let mut out = vec![0.0; mlp.output_dim()];
    let mut d_out = vec![0.0; mlp.output_dim()];
    let mut d_feature = vec![0.0; mlp.input_dim()];

    for (e, entry) in prepared.entries.iter().enumerate() {
        let d = &dense[e * s..(e + 1) * s];
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        let i = entry.source;

        let mut d_sigma = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                d_sigma[r][c] = d[SIGMA + 3 * r + c];
            }
        }
        let (_, factors) = covariance_factors(&gs.log_scales[i], &gs.rotations[i])
            .expect("covariance was valid during prepare");
        let (d_log_scale, d_quat) = covariance_backward(&factors, &d_sigma);
        for c in 0..3 {
            grads.positions[i][c] += d[MU + c];
            grads.log_scales[i][c] += d_log_scale[c];
        }
        for c in 0..4 {
            grads.rotations[i][c] += d_quat[c];
        }

        // Sigmoid activations on the modulated raw values.
        for c in 0..3 {
            let col = entry.color[c];
            d_out[c] = d[COLOR + c] * col * (1.0 - col);
        }
        let sem = prepared.semantic(e);
        for c in 0..k {
            d_out[3 + c] = d[SEMANTIC + c] * sem[c] * (1.0 - sem[c]);
        }
        d_out[3 + k] = d[ALPHA] * entry.opacity * (1.0 - entry.opacity);

        for c in 0..3 {
            grads.base_colors[i][c] += d_out[c];
        }
        for c in 0..k {
            grads.base_semantics[i * k + c] += d_out[3 + c];
        }
        grads.raw_opacities[i] += d_out[3 + k];

        if d_out.iter().all(|v| *v == 0.0) {
            continue;
        }
        let pos = &gs.positions[i];
        scene.field.fuse_into(pos, &mut feature);
        mlp.forward_into(&feature, &mut hidden, &mut out);
        mlp.backward(&feature, &hidden, &d_out, &mut grads.decoder, &mut d_feature);
        let d_pos = scene.field.fuse_backward(pos, &d_feature, &mut grads.texels);
        for c in 0..3 {
            grads.positions[i][c] += d_pos[c];
        }
    }
    grads
}
