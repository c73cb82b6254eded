use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use crate::dataset::SliceStack;
use crate::gaussian::{GaussianSet, RawGaussianParams};
use crate::raster::Scene;
use crate::triplane::{DecoderMlp, TriPlaneField};
use crate::{logit, Error, Result};

/// Training voxels brighter than this seed a Gaussian.
pub const INTENSITY_THRESHOLD: f64 = 0.05;
/// Fallback grid edge when no voxel qualifies.
pub const FALLBACK_GRID: usize = 16;
const NEIGHBOURS: usize = 8;

struct Candidate {
    position: [f64; 3],
    intensity: f64,
    semantic: Option<[f64; 3]>,
}

fn raw_value(v: f64) -> f64 {
    logit(v.clamp(0.01, 0.99))
}

/// Gaussians seeded at bright voxels of the training slices, subsampled to
/// `config.n_init`, with isotropic scales from the mean distance to their
/// nearest neighbours. Falls back to a uniform grid over the unit cube.
pub fn initialize_gaussians(stack: &SliceStack, config: &TrainConfig) -> Result<GaussianSet> {
    let k = config.semantic_dim;
    if stack.train().next().is_none() {
        return Err(Error::Data("no training slices".into()));
    }
    if let Some(s) = stack.train().find(|s| s.semantic.is_some()) {
        let got = s.semantic.as_ref().map_or(0, |v| v.len() / (stack.width * stack.height).max(1));
        if got != k {
            return Err(Error::Config(format!("slices carry {got} semantic channels, config expects {k}")));
        }
    }

    let mut cands = Vec::new();
    for s in stack.train() {
        for row in 0..stack.height {
            for col in 0..stack.width {
                let px = row * stack.width + col;
                let v = s.intensity[px];
                if v > INTENSITY_THRESHOLD {
                    let u = (col as f64 + 0.5) / stack.width as f64;
                    let w = (row as f64 + 0.5) / stack.height as f64;
                    cands.push(Candidate {
                        position: stack.axis.point(u, w, s.depth),
                        intensity: v,
                        semantic: s.semantic.as_ref().map(|sem| [sem[3 * px], sem[3 * px + 1], sem[3 * px + 2]]),
                    });
                }
            }
        }
    }

    if cands.is_empty() {
        let g = FALLBACK_GRID;
        for i in 0..g * g * g {
            let c = |j: usize| (j as f64 + 0.5) / g as f64;
            cands.push(Candidate { position: [c(i % g), c(i / g % g), c(i / (g * g))], intensity: 0.0, semantic: None });
        }
    } else if cands.len() > config.n_init {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picked = rand::seq::index::sample(&mut rng, cands.len(), config.n_init).into_vec();
        picked.sort_unstable();
        let mut keep = vec![false; cands.len()];
        picked.iter().for_each(|i| keep[*i] = true);
        let mut i = 0;
        cands.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }

    let points: Vec<[f64; 3]> = cands.iter().map(|c| c.position).collect();
    let voxel = 1.0 / stack.width.max(stack.height).max(stack.len()) as f64;
    let spacing = mean_neighbour_distance(&points, NEIGHBOURS, voxel);
    let opacity = logit(config.init_opacity);
    let mut set = GaussianSet::new(k);
    for (c, d) in cands.iter().zip(spacing) {
        let sem: Vec<f64> = match c.semantic {
            Some(rgb) if k == 3 => rgb.iter().map(|v| raw_value(*v)).collect(),
            _ => vec![raw_value(0.0); k],
        };
        set.push(RawGaussianParams {
            position: c.position,
            log_scale: [d.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            raw_opacity: opacity,
            base_color: [raw_value(c.intensity); 3],
            base_semantic: sem,
        })?;
    }
    Ok(set)
}

/// Seeded Gaussians plus a randomly initialized tri-plane field and decoder.
pub fn initialize_scene(stack: &SliceStack, config: &TrainConfig) -> Result<Scene> {
    config.validate()?;
    let gaussians = initialize_gaussians(stack, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7a11_5eed);
    let field = TriPlaneField::random(
        config.triplane_resolution,
        config.triplane_channels,
        config.fusion,
        config.texel_init,
        rng.random(),
    )?;
    let decoder = DecoderMlp::random(field.feature_dim(), config.decoder_hidden, config.semantic_dim, rng.random())?;
    Scene::new(gaussians, field, decoder)
}

/// Mean distance from each point to its `k` nearest others, using a
/// uniform bucket grid. A lone point gets `fallback`.
fn mean_neighbour_distance(points: &[[f64; 3]], k: usize, fallback: f64) -> Vec<f64> {
    let n = points.len();
    if n < 2 {
        return vec![fallback; n];
    }
    let k = k.min(n - 1);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max).max(1e-12);
    let cells_per_axis = ((n as f64 / 2.0).cbrt().ceil() as usize).clamp(1, 256);
    let cell = extent / cells_per_axis as f64;
    let dims: [usize; 3] = core::array::from_fn(|d| (((hi[d] - lo[d]) / cell) as usize + 1).min(cells_per_axis + 1));
    let cell_of = |p: &[f64; 3]| -> [usize; 3] { core::array::from_fn(|d| (((p[d] - lo[d]) / cell) as usize).min(dims[d] - 1)) };

    let flat = |c: [usize; 3]| (c[2] * dims[1] + c[1]) * dims[0] + c[0];
    let mut starts = vec![0usize; dims[0] * dims[1] * dims[2] + 1];
    for p in points {
        starts[flat(cell_of(p)) + 1] += 1;
    }
    for i in 1..starts.len() {
        starts[i] += starts[i - 1];
    }
    let mut fill = starts.clone();
    let mut members = vec![0usize; n];
    for (i, p) in points.iter().enumerate() {
        let c = flat(cell_of(p));
        members[fill[c]] = i;
        fill[c] += 1;
    }

    let max_ring = dims.iter().copied().max().unwrap_or(1);
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let c = cell_of(p);
            best.clear();
            for ring in 0..=max_ring {
                let r = ring as isize;
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                                continue;
                            }
                            let q = [c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz];
                            if (0..3).any(|d| q[d] < 0 || q[d] >= dims[d] as isize) {
                                continue;
                            }
                            let f = flat([q[0] as usize, q[1] as usize, q[2] as usize]);
                            for &j in &members[starts[f]..starts[f + 1]] {
                                if j == i {
                                    continue;
                                }
                                let o = &points[j];
                                let d2 = (p[0] - o[0]).powi(2) + (p[1] - o[1]).powi(2) + (p[2] - o[2]).powi(2);
                                if best.len() < k || d2 < best[k - 1] {
                                    let at = best.partition_point(|b| *b <= d2);
                                    best.insert(at, d2);
                                    best.truncate(k);
                                }
                            }
                        }
                    }
                }
                // Anything outside the searched rings is at least `ring · cell` away.
                let reach = ring as f64 * cell;
                if best.len() == k && best[k - 1] <= reach * reach {
                    break;
                }
            }
            let mean = best.iter().map(|d| d.sqrt()).sum::<f64>() / best.len() as f64;
            if mean > 0.0 {
                mean
            } else {
                fallback
            }
        })
        .collect()
}
