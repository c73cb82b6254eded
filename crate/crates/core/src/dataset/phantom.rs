use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::palette::SemanticPalette;
use super::volume::{LabelVolume, Volume};
use crate::{Error, Result};

/// Intensity of each phantom class, background first.
pub const PHANTOM_INTENSITIES: [f32; 4] = [0.0, 0.35, 0.65, 0.9];
pub const PHANTOM_MIN_DIM: usize = 32;

/// A synthetic volume with its label volume and palette.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub labels: LabelVolume,
    pub palette: SemanticPalette,
}

#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
    cos: f64,
    sin: f64,
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let x = self.cos * d[0] + self.sin * d[1];
        let y = -self.sin * d[0] + self.cos * d[1];
        let q = (x / self.radii[0]).powi(2) + (y / self.radii[1]).powi(2) + (d[2] / self.radii[2]).powi(2);
        q <= 1.0
    }
}

fn jitter(rng: &mut ChaCha8Rng, c: [f64; 3], amp: f64) -> [f64; 3] {
    c.map(|v| v + rng.random_range(-amp..amp))
}

fn ellipsoid(rng: &mut ChaCha8Rng, center: [f64; 3], radii: [f64; 3]) -> Ellipsoid {
    let theta: f64 = rng.random_range(-0.4..0.4);
    Ellipsoid { center, radii, cos: theta.cos(), sin: theta.sin() }
}

/// Three nested, randomly oriented ellipsoids over a black background,
/// smoothed by a one-voxel Gaussian blur. Labels use the four-class palette.
pub fn generate_phantom(seed: u64, dims: [usize; 3]) -> Result<Phantom> {
    if dims.iter().any(|d| *d < PHANTOM_MIN_DIM) {
        return Err(Error::Config(format!("phantom dims must be ≥ {PHANTOM_MIN_DIM}, got {dims:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = jitter(&mut rng, [0.5; 3], 0.015);
    let outer_r = [
        rng.random_range(0.34..0.42),
        rng.random_range(0.30..0.38),
        rng.random_range(0.28..0.36),
    ];
    let outer = ellipsoid(&mut rng, c0, outer_r);
    let c1 = jitter(&mut rng, c0, 0.01);
    let f1: f64 = rng.random_range(0.55..0.65);
    let middle = ellipsoid(&mut rng, c1, outer_r.map(|r| r * f1));
    let c2 = jitter(&mut rng, c1, 0.005);
    let f2: f64 = rng.random_range(0.32..0.38);
    let core = ellipsoid(&mut rng, c2, outer_r.map(|r| r * f2));

    let palette = SemanticPalette::default_four_class();
    let grays: Vec<u8> = palette.entries().iter().map(|e| e.gray).collect();
    let n: usize = dims.iter().product();
    let mut class = Vec::with_capacity(n);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [
                    (x as f64 + 0.5) / dims[0] as f64,
                    (y as f64 + 0.5) / dims[1] as f64,
                    (z as f64 + 0.5) / dims[2] as f64,
                ];
                let c = if core.contains(p) {
                    3
                } else if middle.contains(p) {
                    2
                } else if outer.contains(p) {
                    1
                } else {
                    0
                };
                class.push(c);
            }
        }
    }
    let mut values: Vec<f64> = class.iter().map(|c| PHANTOM_INTENSITIES[*c] as f64).collect();
    blur(&mut values, dims, 1.0);
    let volume = Volume::new(dims, values.into_iter().map(|v| v as f32).collect())?;
    let labels = LabelVolume::new(dims, class.into_iter().map(|c| grays[c]).collect())?;
    Ok(Phantom { volume, labels, palette })
}

/// Separable Gaussian blur with clamped edges.
fn blur(data: &mut [f64], dims: [usize; 3], sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut line = Vec::new();
    for axis in 0..3 {
        let len = dims[axis];
        let stride = strides[axis];
        let mut out = data.to_vec();
        for start in 0..data.len() {
            if (start / stride) % len != 0 {
                continue;
            }
            line.clear();
            line.extend((0..len).map(|i| data[start + i * stride]));
            for i in 0..len {
                let mut acc = 0.0;
                for (j, k) in kernel.iter().enumerate() {
                    let s = (i as isize + j as isize - radius).clamp(0, len as isize - 1) as usize;
                    acc += k * line[s];
                }
                out[start + i * stride] = acc;
            }
        }
        data.copy_from_slice(&out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_phantom(3, [32, 32, 32]).unwrap();
        let b = generate_phantom(3, [32, 32, 32]).unwrap();
        let c = generate_phantom(4, [32, 32, 32]).unwrap();
        assert_eq!(a.volume, b.volume);
        assert_eq!(a.labels, b.labels);
        assert_ne!(a.volume, c.volume);
    }

    #[test]
    fn four_classes_and_core_at_center() {
        for seed in 0..40 {
            let p = generate_phantom(seed, [32, 34, 33]).unwrap();
            let mut hist = [0usize; 256];
            p.labels.data.iter().for_each(|g| hist[*g as usize] += 1);
            assert_eq!(hist.iter().filter(|h| **h > 0).count(), 4, "seed {seed}");
            let d = p.labels.dims;
            assert_eq!(p.labels.get(d[0] / 2, d[1] / 2, d[2] / 2), 255, "seed {seed}");
        }
    }

    #[test]
    fn intensities_stay_in_range() {
        let p = generate_phantom(1, [32, 32, 32]).unwrap();
        assert!(p.volume.data.iter().all(|v| (0.0..=0.9 + 1e-6).contains(v)));
        assert!(p.volume.get(16, 16, 16) > 0.8);
        assert!(p.volume.get(0, 0, 0) < 1e-6);
    }

    #[test]
    fn small_dims_rejected() {
        assert!(generate_phantom(0, [31, 64, 64]).is_err());
    }

    #[test]
    fn blur_preserves_constants() {
        let mut d = alloc::vec![0.4; 5 * 6 * 7];
        blur(&mut d, [5, 6, 7], 1.0);
        assert!(d.iter().all(|v| (v - 0.4).abs() < 1e-12));
    }
}
