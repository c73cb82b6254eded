//! Reference image metrics for held-out evaluation.
//!
//! SSIM uses the standard configuration: 11×11 Gaussian window with σ = 1.5,
//! `C1 = (0.01·L)²`, `C2 = (0.03·L)²` with `L = 1`, evaluated only where the
//! window fits inside the image, and averaged over channels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Borrowed row-major image with interleaved channels.
#[derive(Debug, Clone, Copy)]
pub struct ImageRef<'a> {
    pub data: &'a [f64],
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl<'a> ImageRef<'a> {
    pub fn new(data: &'a [f64], width: usize, height: usize, channels: usize) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "image buffer holds {} values, expected {width}×{height}×{channels}",
                data.len()
            )));
        }
        Ok(ImageRef { data, width, height, channels })
    }

    fn same_shape(&self, other: &ImageRef<'_>) -> Result<()> {
        if (self.width, self.height, self.channels) != (other.width, other.height, other.channels) {
            return Err(Error::Validation(format!(
                "image shapes differ: {}×{}×{} vs {}×{}×{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

/// PSNR in dB; identical images have no finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }
}

pub fn mse(a: &ImageRef<'_>, b: &ImageRef<'_>) -> Result<f64> {
    a.same_shape(b)?;
    if a.data.is_empty() {
        return Err(Error::Validation("cannot compare empty images".into()));
    }
    let sum: f64 = a.data.iter().zip(b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len() as f64)
}

pub fn psnr(a: &ImageRef<'_>, b: &ImageRef<'_>, peak: f64) -> Result<Psnr> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> Psnr {
    if mse == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Finite(10.0 * (peak * peak / mse).log10())
    }
}

/// Mean squared error over all pixels and semantic channels.
pub fn semantic_mse(rendered: &ImageRef<'_>, target: &ImageRef<'_>) -> Result<f64> {
    mse(rendered, target)
}

/// Normalized 1D Gaussian taps.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Separable valid-region filtering of a `h × w` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let n = SSIM_WINDOW;
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = taps.iter().zip(&row[c..c + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * horiz[(r + k) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: spread a valid-region map back onto the
/// full plane.
fn filter_valid_adjoint(grad: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let n = SSIM_WINDOW;
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut horiz = vec![0.0; h * ow];
    for r in 0..oh {
        for c in 0..ow {
            let g = grad[r * ow + c];
            for (k, t) in taps.iter().enumerate() {
                horiz[(r + k) * ow + c] += t * g;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..ow {
            let g = horiz[r * ow + c];
            for (k, t) in taps.iter().enumerate() {
                out[r * w + c + k] += t * g;
            }
        }
    }
    out
}

fn check_ssim_inputs(a: &ImageRef<'_>, b: &ImageRef<'_>) -> Result<()> {
    a.same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW || a.channels == 0 {
        return Err(Error::Validation(format!(
            "SSIM needs images of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {}×{}",
            a.width, a.height
        )));
    }
    Ok(())
}

pub fn ssim(a: &ImageRef<'_>, b: &ImageRef<'_>) -> Result<f64> {
    check_ssim_inputs(a, b)?;
    Ok(ssim_impl(a, b, false).0)
}

/// SSIM together with its gradient w.r.t. every value of `a`.
pub fn ssim_with_grad(a: &ImageRef<'_>, b: &ImageRef<'_>) -> Result<(f64, Vec<f64>)> {
    check_ssim_inputs(a, b)?;
    Ok(ssim_impl(a, b, true))
}

fn ssim_impl(a: &ImageRef<'_>, b: &ImageRef<'_>, want_grad: bool) -> (f64, Vec<f64>) {
    let taps = gaussian_window();
    let (w, h, nc) = (a.width, a.height, a.channels);
    let locations = (w - SSIM_WINDOW + 1) * (h - SSIM_WINDOW + 1);
    let norm = 1.0 / (locations * nc) as f64;
    let mut total = 0.0;
    let mut grad = if want_grad { vec![0.0; a.data.len()] } else { Vec::new() };

    for c in 0..nc {
        let x = a.channel(c);
        let y = b.channel(c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mu_x = filter_valid(&x, w, h, &taps);
        let mu_y = filter_valid(&y, w, h, &taps);
        let e_xx = filter_valid(&xx, w, h, &taps);
        let e_yy = filter_valid(&yy, w, h, &taps);
        let e_xy = filter_valid(&xy, w, h, &taps);

        let mut g_mu = if want_grad { vec![0.0; locations] } else { Vec::new() };
        let mut g_xx = g_mu.clone();
        let mut g_xy = g_mu.clone();
        for l in 0..locations {
            let (mx, my) = (mu_x[l], mu_y[l]);
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * (e_xy[l] - mx * my) + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = (e_xx[l] - mx * mx) + (e_yy[l] - my * my) + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let denom = b1 * b2;
                g_mu[l] = norm * ((2.0 * my * a2 - 2.0 * my * a1) / denom - s * (2.0 * mx / b1 - 2.0 * mx / b2));
                g_xy[l] = norm * 2.0 * a1 / denom;
                g_xx[l] = -norm * s / b2;
            }
        }
        if want_grad {
            let d_mu = filter_valid_adjoint(&g_mu, w, h, &taps);
            let d_xx = filter_valid_adjoint(&g_xx, w, h, &taps);
            let d_xy = filter_valid_adjoint(&g_xy, w, h, &taps);
            for p in 0..w * h {
                grad[p * nc + c] = d_mu[p] + y[p] * d_xy[p] + 2.0 * x[p] * d_xx[p];
            }
        }
    }
    (total / (locations * nc) as f64, grad)
}

/// Mean and population standard deviation over a set of per-slice values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// Values left out of the statistics (infinite PSNR).
    pub excluded: usize,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    aggregate_with_exclusions(values, 0)
}

fn aggregate_with_exclusions(values: &[f64], excluded: usize) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate { mean: f64::NAN, std: f64::NAN, count: 0, excluded };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Aggregate { mean, std: var.sqrt(), count: n, excluded }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceMetrics {
    pub index: usize,
    pub depth: f64,
    pub psnr: Psnr,
    pub ssim: f64,
    /// `None` when the dataset carries no semantic maps.
    pub semantic_mse: Option<f64>,
    pub label_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub slices: Vec<SliceMetrics>,
    pub psnr: Aggregate,
    pub ssim: Aggregate,
    pub semantic_mse: Option<Aggregate>,
    pub label_accuracy: Option<Aggregate>,
}

impl MetricReport {
    pub fn from_slices(slices: Vec<SliceMetrics>) -> Self {
        let finite: Vec<f64> = slices.iter().filter_map(|s| s.psnr.finite()).collect();
        let excluded = slices.len() - finite.len();
        let ssim: Vec<f64> = slices.iter().map(|s| s.ssim).collect();
        let sem: Option<Vec<f64>> = slices.iter().map(|s| s.semantic_mse).collect();
        let acc: Option<Vec<f64>> = slices.iter().map(|s| s.label_accuracy).collect();
        let has = !slices.is_empty();
        MetricReport {
            psnr: aggregate_with_exclusions(&finite, excluded),
            ssim: aggregate(&ssim),
            semantic_mse: sem.filter(|_| has).map(|v| aggregate(&v)),
            label_accuracy: acc.filter(|_| has).map(|v| aggregate(&v)),
            slices,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(data: &[f64], w: usize, h: usize, c: usize) -> ImageRef<'_> {
        ImageRef::new(data, w, h, c).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = vec![0.25; 100];
        assert_eq!(psnr(&img(&a, 10, 10, 1), &img(&a, 10, 10, 1), 1.0).unwrap(), Psnr::Infinite);
        assert_eq!(psnr_from_mse(0.01, 1.0), Psnr::Finite(20.0));
        assert_eq!(psnr_from_mse(1e-4, 1.0), Psnr::Finite(40.0));
        let b = vec![0.35; 100];
        let Psnr::Finite(v) = psnr(&img(&a, 10, 10, 1), &img(&b, 10, 10, 1), 1.0).unwrap() else { panic!() };
        assert!((v - 20.0).abs() < 1e-12);
        assert!(psnr(&img(&a, 10, 10, 1), &img(&a[..50], 5, 10, 1), 1.0).is_err());
    }

    #[test]
    fn semantic_mse_examples() {
        let a = vec![0.3; 300];
        assert_eq!(semantic_mse(&img(&a, 10, 10, 3), &img(&a, 10, 10, 3)).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((semantic_mse(&img(&a, 10, 10, 3), &img(&b, 10, 10, 3)).unwrap() - 0.01).abs() < 1e-12);
        let x = vec![0.0; 100];
        let mut y = x.clone();
        y[37] = 1.0;
        assert_eq!(semantic_mse(&img(&x, 10, 10, 1), &img(&y, 10, 10, 1)).unwrap(), 0.01);
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..20 * 16 * 3).map(|_| rng.random()).collect();
        assert_eq!(ssim(&img(&a, 20, 16, 3), &img(&a, 20, 16, 3)).unwrap(), 1.0);
        let flat = vec![0.4; 144];
        assert_eq!(ssim(&img(&flat, 12, 12, 1), &img(&flat, 12, 12, 1)).unwrap(), 1.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = vec![0.0; 100];
        assert!(matches!(ssim(&img(&a, 10, 10, 1), &img(&a, 10, 10, 1)), Err(Error::Validation(_))));
    }

    /// Direct 2D window sum at every valid location, no separability.
    fn ssim_dense(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
        let taps = gaussian_window();
        let mut total = 0.0;
        let mut count = 0;
        for r in 0..=h - SSIM_WINDOW {
            for c in 0..=w - SSIM_WINDOW {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let wt = taps[i] * taps[j];
                        let (x, y) = (a[(r + i) * w + c + j], b[(r + i) * w + c + j]);
                        mx += wt * x;
                        my += wt * y;
                        sxx += wt * x * x;
                        syy += wt * y * y;
                        sxy += wt * x * y;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cxy = sxy - mx * my;
                total += (2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn anticorrelated_checkerboard_is_negative() {
        let (w, h) = (16, 16);
        let a: Vec<f64> = (0..w * h).map(|i| ((i % w + i / w) % 2) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let s = ssim(&img(&a, w, h, 1), &img(&b, w, h, 1)).unwrap();
        let reference = ssim_dense(&a, &b, w, h);
        assert!(s < 0.0);
        assert!((s - reference).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_dense_reference_on_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (19, 14);
        let a: Vec<f64> = (0..w * h).map(|_| rng.random()).collect();
        let b: Vec<f64> = a.iter().map(|v| (v + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0)).collect();
        let s = ssim(&img(&a, w, h, 1), &img(&b, w, h, 1)).unwrap();
        assert!((s - ssim_dense(&a, &b, w, h)).abs() < 1e-12);
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h, c) = (13, 12, 2);
        let mut a: Vec<f64> = (0..w * h * c).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..w * h * c).map(|_| rng.random()).collect();
        let (_, grad) = ssim_with_grad(&img(&a, w, h, c), &img(&b, w, h, c)).unwrap();
        let step = 1e-6;
        for i in 0..a.len() {
            let orig = a[i];
            a[i] = orig + step;
            let sp = ssim(&img(&a, w, h, c), &img(&b, w, h, c)).unwrap();
            a[i] = orig - step;
            let sm = ssim(&img(&a, w, h, c), &img(&b, w, h, c)).unwrap();
            a[i] = orig;
            let n = (sp - sm) / (2.0 * step);
            assert!((n - grad[i]).abs() < 1e-8, "pixel {i}: {n} vs {}", grad[i]);
        }
    }

    #[test]
    fn symmetric_and_channel_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (14, 13);
        let a: Vec<f64> = (0..w * h * 3).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..w * h * 3).map(|_| rng.random()).collect();
        let (ia, ib) = (img(&a, w, h, 3), img(&b, w, h, 3));
        assert_eq!(ssim(&ia, &ib).unwrap(), ssim(&ib, &ia).unwrap());
        assert_eq!(psnr(&ia, &ib, 1.0).unwrap(), psnr(&ib, &ia, 1.0).unwrap());

        let perm = |v: &[f64]| -> Vec<f64> { v.chunks(3).flat_map(|p| [p[2], p[0], p[1]]).collect() };
        let (pa, pb) = (perm(&a), perm(&b));
        let s0 = ssim(&ia, &ib).unwrap();
        let s1 = ssim(&img(&pa, w, h, 3), &img(&pb, w, h, 3)).unwrap();
        assert!((s0 - s1).abs() < 1e-15);
    }

    #[test]
    fn report_aggregates_match_recomputation() {
        let slices: Vec<SliceMetrics> = (0..5)
            .map(|i| SliceMetrics {
                index: i,
                depth: i as f64 / 5.0,
                psnr: if i == 2 { Psnr::Infinite } else { Psnr::Finite(30.0 + i as f64) },
                ssim: 0.9 + 0.01 * i as f64,
                semantic_mse: Some(0.001 * i as f64),
                label_accuracy: None,
            })
            .collect();
        let r = MetricReport::from_slices(slices.clone());
        assert_eq!(r.psnr.count, 4);
        assert_eq!(r.psnr.excluded, 1);
        let vals = [30.0, 31.0, 33.0, 34.0];
        let mean = vals.iter().sum::<f64>() / 4.0;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0).sqrt();
        assert!((r.psnr.mean - mean).abs() < 1e-12 && (r.psnr.std - std).abs() < 1e-12);
        let ssim_vals: Vec<f64> = slices.iter().map(|s| s.ssim).collect();
        let again = aggregate(&ssim_vals);
        assert!((r.ssim.mean - again.mean).abs() < 1e-12 && (r.ssim.std - again.std).abs() < 1e-12);
        assert!(r.semantic_mse.is_some());
        assert!(r.label_accuracy.is_none());
    }
}
