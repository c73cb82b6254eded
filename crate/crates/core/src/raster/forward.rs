use alloc::vec;
use alloc::vec::Vec;

use super::par::map_indexed;
use super::prepare::{check_inputs, prepare, Prepared};
use super::tiles::{bin_boxes, TileLists};
use super::{RasterOptions, RenderedSlice, Scene, SlicePlaneSpec, MAX_ALPHA};
use crate::Result;

struct TileOutput {
    intensity: Vec<f64>,
    semantic: Vec<f64>,
    transmittance: Vec<f64>,
}

pub(crate) fn bin(prepared: &Prepared, spec: &SlicePlaneSpec, opts: &RasterOptions) -> Result<TileLists> {
    bin_boxes(spec, prepared.entries.iter().map(|e| e.bbox).enumerate(), opts.tile_size)
}

/// Render intensity and semantic images of one slice.
pub fn render_slice(scene: &Scene, spec: &SlicePlaneSpec, opts: &RasterOptions) -> Result<RenderedSlice> {
    check_inputs(scene, spec)?;
    let prepared = prepare(scene, spec)?;
    let tiles = bin(&prepared, spec, opts)?;
    let k = prepared.k;

    let outputs = map_indexed(tiles.tile_count(), |tile| render_tile(&prepared, &tiles, spec, tile));

    let mut out = RenderedSlice::blank(scene, spec);
    for (tile, o) in outputs.into_iter().enumerate() {
        let (c0, c1, r0, r1) = tiles.tile_rect(tile, spec.width, spec.height);
        let mut local = 0;
        for row in r0..r1 {
            for col in c0..c1 {
                let px = row * spec.width + col;
                out.intensity[px * 3..px * 3 + 3].copy_from_slice(&o.intensity[local * 3..local * 3 + 3]);
                out.semantic[px * k..(px + 1) * k].copy_from_slice(&o.semantic[local * k..(local + 1) * k]);
                out.transmittance[px] = o.transmittance[local];
                local += 1;
            }
        }
    }
    Ok(out)
}

fn render_tile(prepared: &Prepared, tiles: &TileLists, spec: &SlicePlaneSpec, tile: usize) -> TileOutput {
    let (c0, c1, r0, r1) = tiles.tile_rect(tile, spec.width, spec.height);
    let n = (c1 - c0) * (r1 - r0);
    let k = prepared.k;
    let mut o = TileOutput { intensity: vec![0.0; n * 3], semantic: vec![0.0; n * k], transmittance: vec![1.0; n] };
    let list = &tiles.lists[tile];
    let mut local = 0;
    for row in r0..r1 {
        for col in c0..c1 {
            let (u, v) = spec.pixel_center(col, row);
            let mut t = 1.0;
            let color = &mut o.intensity[local * 3..local * 3 + 3];
            let sem = &mut o.semantic[local * k..(local + 1) * k];
            for &e in list {
                let entry = &prepared.entries[e as usize];
                if !entry.bbox.contains(col, row) {
                    continue;
                }
                let a = (entry.response(u, v) * entry.opacity).min(MAX_ALPHA);
                let w = a * t;
                for ch in 0..3 {
                    color[ch] += w * entry.color[ch];
                }
                for (s, v) in sem.iter_mut().zip(prepared.semantic(e as usize)) {
                    *s += w * v;
                }
                t *= 1.0 - a;
            }
            o.transmittance[local] = t;
            local += 1;
        }
    }
    o
}
