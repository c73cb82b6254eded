use alloc::format;
use alloc::vec::Vec;

use crate::dataset::Slice;
use crate::metrics::{ssim_with_grad, ImageRef};
use crate::raster::{PixelGradients, RenderedSlice};
use crate::{Error, Result};

/// Loss components for one rendered slice against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l1: f64,
    /// `1 − SSIM`.
    pub ssim_term: f64,
    pub semantic_mse: f64,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.l1.is_finite() && self.ssim_term.is_finite() && self.semantic_mse.is_finite() && self.total.is_finite()
    }
}

/// Grayscale target repeated on all three intensity channels.
fn target_rgb(target: &Slice) -> Vec<f64> {
    target.intensity.iter().flat_map(|v| [*v; 3]).collect()
}

fn check_shapes(rendered: &RenderedSlice, target: &Slice) -> Result<()> {
    let n = rendered.spec.pixel_count();
    if target.intensity.len() != n {
        return Err(Error::Validation(format!(
            "target slice has {} pixels, render has {n}",
            target.intensity.len()
        )));
    }
    if let Some(sem) = &target.semantic {
        if sem.len() != rendered.semantic.len() {
            return Err(Error::Validation(format!(
                "target semantic map has {} values, render has {}",
                sem.len(),
                rendered.semantic.len()
            )));
        }
    }
    Ok(())
}

/// Loss report only. See [`loss_and_gradients`].
pub fn compute_loss(rendered: &RenderedSlice, target: &Slice, ssim_weight: f64, semantic_weight: f64) -> Result<LossReport> {
    evaluate(rendered, target, ssim_weight, semantic_weight, false).map(|(r, _)| r)
}

/// `(1 − λ)·L1 + λ·(1 − SSIM) + β·MSE` and its gradient w.r.t. the render.
/// Targets without a semantic map contribute no semantic term.
pub fn loss_and_gradients(
    rendered: &RenderedSlice,
    target: &Slice,
    ssim_weight: f64,
    semantic_weight: f64,
) -> Result<(LossReport, PixelGradients)> {
    evaluate(rendered, target, ssim_weight, semantic_weight, true)
}

fn evaluate(
    rendered: &RenderedSlice,
    target: &Slice,
    lambda: f64,
    beta: f64,
    want_grad: bool,
) -> Result<(LossReport, PixelGradients)> {
    check_shapes(rendered, target)?;
    let spec = &rendered.spec;
    let mut grads = PixelGradients::zeros(spec, rendered.semantic_dim);
    let gt = target_rgb(target);
    let count = gt.len() as f64;

    let mut l1 = 0.0;
    for (i, (x, y)) in rendered.intensity.iter().zip(&gt).enumerate() {
        let d = x - y;
        l1 += d.abs();
        if want_grad && d != 0.0 {
            grads.intensity[i] = (1.0 - lambda) * d.signum() / count;
        }
    }
    l1 /= count;

    let ssim_term = if lambda > 0.0 {
        let a = ImageRef::new(&rendered.intensity, spec.width, spec.height, 3)?;
        let b = ImageRef::new(&gt, spec.width, spec.height, 3)?;
        let (s, g) = ssim_with_grad(&a, &b)?;
        if want_grad {
            grads.intensity.iter_mut().zip(&g).for_each(|(o, d)| *o -= lambda * d);
        }
        1.0 - s
    } else {
        0.0
    };

    let mut semantic_mse = 0.0;
    if let Some(sem) = &target.semantic {
        let n = sem.len() as f64;
        for (i, (x, y)) in rendered.semantic.iter().zip(sem).enumerate() {
            let d = x - y;
            semantic_mse += d * d;
            if want_grad {
                grads.semantic[i] = beta * 2.0 * d / n;
            }
        }
        semantic_mse /= n;
    }

    let total = (1.0 - lambda) * l1 + lambda * ssim_term + beta * semantic_mse;
    Ok((LossReport { l1, ssim_term, semantic_mse, total }, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;
    use crate::raster::SlicePlaneSpec;
    use crate::Axis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rendered(w: usize, h: usize, seed: u64) -> RenderedSlice {
        let scene = crate::fixtures::gradcheck_scene(0).unwrap();
        let spec = SlicePlaneSpec::new(Axis::Z, 0.5, w, h);
        let mut out = crate::render_slice(&scene, &spec, &Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.intensity.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
        out.semantic.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
        out
    }

    fn matching(r: &RenderedSlice) -> Slice {
        Slice {
            index: 0,
            depth: 0.5,
            intensity: r.intensity.chunks_exact(3).map(|c| c[0]).collect(),
            semantic: Some(r.semantic.clone()),
            split: Split::Train,
        }
    }

    fn gray(r: &mut RenderedSlice) {
        for c in r.intensity.chunks_exact_mut(3) {
            c[1] = c[0];
            c[2] = c[0];
        }
    }

    #[test]
    fn identical_gives_zero() {
        let mut r = rendered(16, 12, 1);
        gray(&mut r);
        let t = matching(&r);
        let rep = compute_loss(&r, &t, 0.2, 1.0).unwrap();
        assert_eq!((rep.l1, rep.semantic_mse, rep.total), (0.0, 0.0, 0.0));
        assert!(rep.ssim_term.abs() < 1e-15);
        let rep = compute_loss(&r, &t, 1.0, 1.0).unwrap();
        assert!(rep.total.abs() < 1e-15);
    }

    #[test]
    fn constant_offset_l1() {
        let mut r = rendered(16, 12, 2);
        r.intensity.iter_mut().for_each(|v| *v = 0.5);
        let mut t = matching(&r);
        t.intensity.iter_mut().for_each(|v| *v = 0.4);
        t.semantic.as_mut().unwrap().iter_mut().for_each(|v| *v += 0.1);
        let rep = compute_loss(&r, &t, 0.0, 2.0).unwrap();
        assert!((rep.l1 - 0.1).abs() < 1e-12);
        assert!((rep.semantic_mse - 0.01).abs() < 1e-12);
        assert!((rep.total - (0.1 + 2.0 * 0.01)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let r = rendered(16, 12, 3);
        let mut t = matching(&r);
        t.intensity.pop();
        assert!(matches!(compute_loss(&r, &t, 0.2, 1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_semantics_contribute_nothing() {
        let r = rendered(16, 12, 4);
        let mut t = matching(&r);
        t.semantic = None;
        let (rep, g) = loss_and_gradients(&r, &t, 0.2, 1.0).unwrap();
        assert_eq!(rep.semantic_mse, 0.0);
        assert!(g.semantic.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let r = rendered(14, 13, 5);
        let mut t = matching(&r);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        t.intensity.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
        let (lambda, beta) = (0.3, 1.5);
        let (_, g) = loss_and_gradients(&r, &t, lambda, beta).unwrap();
        let h = 1e-6;
        for idx in [0usize, 17, 100, 333, 545] {
            let mut p = r.clone();
            p.intensity[idx] += h;
            let lp = compute_loss(&p, &t, lambda, beta).unwrap().total;
            p.intensity[idx] -= 2.0 * h;
            let lm = compute_loss(&p, &t, lambda, beta).unwrap().total;
            let num = (lp - lm) / (2.0 * h);
            assert!((num - g.intensity[idx]).abs() < 1e-7, "{idx}: {num} vs {}", g.intensity[idx]);
        }
        for idx in [0usize, 50, 400] {
            let mut p = r.clone();
            p.semantic[idx] += h;
            let lp = compute_loss(&p, &t, lambda, beta).unwrap().total;
            p.semantic[idx] -= 2.0 * h;
            let lm = compute_loss(&p, &t, lambda, beta).unwrap().total;
            assert!(((lp - lm) / (2.0 * h) - g.semantic[idx]).abs() < 1e-7);
        }
    }
}
