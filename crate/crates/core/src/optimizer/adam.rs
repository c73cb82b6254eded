use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::config::LearningRates;
use crate::raster::{GradientBuffer, ParamGroup, Scene};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one parameter group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        AdamMoments { m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Bias-corrected Adam update of `params` in place at step `t ≥ 1`.
///
/// If any gradient is non-finite nothing is touched and `false` is returned.
pub fn adam_step(params: &mut [f64], grads: &[f64], moments: &mut AdamMoments, lr: f64, t: u64) -> bool {
    debug_assert!(t >= 1);
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), moments.len());
    if !grads.iter().all(|g| g.is_finite()) {
        return false;
    }
    let c1 = 1.0 - BETA1.powi(t.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - BETA2.powi(t.min(i32::MAX as u64) as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut moments.m).zip(&mut moments.v) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
    }
    true
}

/// Adam state for every parameter group of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// Indexed in [`ParamGroup::ALL`] order.
    pub groups: Vec<AdamMoments>,
    pub step: u64,
    /// Group updates skipped because of non-finite gradients.
    pub skipped: u64,
}

impl AdamState {
    pub fn new(scene: &Scene) -> Self {
        AdamState {
            groups: ParamGroup::ALL.iter().map(|g| AdamMoments::zeros(scene.group(*g).len())).collect(),
            step: 0,
            skipped: 0,
        }
    }

    pub fn moments(&self, group: ParamGroup) -> &AdamMoments {
        &self.groups[group as usize]
    }

    pub fn moments_mut(&mut self, group: ParamGroup) -> &mut AdamMoments {
        &mut self.groups[group as usize]
    }

    pub fn matches(&self, scene: &Scene) -> bool {
        self.groups.len() == ParamGroup::ALL.len()
            && ParamGroup::ALL.iter().all(|g| self.moments(*g).len() == scene.group(*g).len())
    }

    /// One Adam step on every group. Returns the groups that were skipped.
    pub fn apply(&mut self, scene: &mut Scene, grads: &GradientBuffer, lr: &LearningRates) -> Vec<ParamGroup> {
        self.step += 1;
        let mut skipped = Vec::new();
        for g in ParamGroup::ALL {
            let t = self.step;
            if !adam_step(scene.group_mut(g), grads.group(g), &mut self.groups[g as usize], lr.get(g), t) {
                self.skipped += 1;
                skipped.push(g);
            }
        }
        skipped
    }

    /// Keep the per-Gaussian moments of Gaussians with `keep[i]` set.
    pub fn retain_gaussians(&mut self, keep: &[bool], semantic_dim: usize) {
        for g in ParamGroup::ALL.into_iter().filter(|g| g.is_per_gaussian()) {
            let w = g.width(semantic_dim);
            let mom = &mut self.groups[g as usize];
            for buf in [&mut mom.m, &mut mom.v] {
                let mut row = 0;
                buf.retain(|_| {
                    let k = keep[row / w.max(1)];
                    row += 1;
                    k
                });
            }
        }
    }

    /// Zero moments for `count` new Gaussians appended at the end.
    pub fn push_gaussians(&mut self, count: usize, semantic_dim: usize) {
        for g in ParamGroup::ALL.into_iter().filter(|g| g.is_per_gaussian()) {
            let n = count * g.width(semantic_dim);
            let mom = &mut self.groups[g as usize];
            mom.m.extend(core::iter::repeat(0.0).take(n));
            mom.v.extend(core::iter::repeat(0.0).take(n));
        }
    }

    /// Append a copy of the per-Gaussian moments of Gaussian `i`.
    pub fn duplicate_gaussian(&mut self, i: usize, semantic_dim: usize) {
        for g in ParamGroup::ALL.into_iter().filter(|g| g.is_per_gaussian()) {
            let w = g.width(semantic_dim);
            let mom = &mut self.groups[g as usize];
            mom.m.extend_from_within(i * w..(i + 1) * w);
            mom.v.extend_from_within(i * w..(i + 1) * w);
        }
    }

    /// Zero the per-Gaussian moments of Gaussian `i`.
    pub fn reset_gaussian(&mut self, i: usize, semantic_dim: usize) {
        for g in ParamGroup::ALL.into_iter().filter(|g| g.is_per_gaussian()) {
            let w = g.width(semantic_dim);
            let mom = &mut self.groups[g as usize];
            mom.m[i * w..(i + 1) * w].fill(0.0);
            mom.v[i * w..(i + 1) * w].fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![0.3, -1.0, 2.0];
        let mut m = AdamMoments::zeros(3);
        assert!(adam_step(&mut p, &[0.0; 3], &mut m, 0.1, 1));
        assert_eq!(p, [0.3, -1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let mut p = vec![1.0, 1.0];
        let mut m = AdamMoments::zeros(2);
        adam_step(&mut p, &[0.5, -3.0], &mut m, 0.01, 1);
        // |m̂| / sqrt(v̂) = 1 at t = 1
        assert!((p[0] - (1.0 - 0.01 * 0.5 / (0.5 + EPSILON))).abs() < 1e-15);
        assert!((p[1] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut p = vec![1.0, 1.0];
        let mut m = AdamMoments::zeros(2);
        assert!(!adam_step(&mut p, &[0.5, f64::NAN], &mut m, 0.01, 1));
        assert_eq!(p, [1.0, 1.0]);
        assert_eq!(m, AdamMoments::zeros(2));
    }

    #[test]
    fn scene_step_counts_skips() {
        let mut scene = crate::fixtures::gradcheck_scene(1).unwrap();
        let mut st = AdamState::new(&scene);
        let mut g = GradientBuffer::zeros_like(&scene);
        g.positions[0][0] = f64::INFINITY;
        g.raw_opacities[2] = 1.0;
        let before = scene.clone();
        let skipped = st.apply(&mut scene, &g, &LearningRates::default());
        assert_eq!(skipped, [ParamGroup::Position]);
        assert_eq!(st.skipped, 1);
        assert_eq!(scene.gaussians.positions, before.gaussians.positions);
        assert!(scene.gaussians.raw_opacities[2] < before.gaussians.raw_opacities[2]);
    }

    #[test]
    fn moments_follow_gaussian_edits() {
        let scene = crate::fixtures::gradcheck_scene(2).unwrap();
        let mut st = AdamState::new(&scene);
        st.moments_mut(ParamGroup::Semantic).m.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
        st.retain_gaussians(&[true, false, true, false, true], 3);
        assert_eq!(st.moments(ParamGroup::Semantic).m, [0.0, 1.0, 2.0, 6.0, 7.0, 8.0, 12.0, 13.0, 14.0]);
        assert_eq!(st.moments(ParamGroup::Rotation).len(), 12);
        st.push_gaussians(2, 3);
        assert_eq!(st.moments(ParamGroup::Position).len(), 15);
        st.reset_gaussian(1, 3);
        assert_eq!(&st.moments(ParamGroup::Semantic).m[3..6], &[0.0; 3]);
    }

    proptest! {
        #[test]
        fn elementwise_independent(vals in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20), t in 1u64..50, rot in 0usize..20) {
            let params: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let grads: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let n = params.len();
            let r = rot % n;
            let mut a = params.clone();
            let mut ma = AdamMoments::zeros(n);
            ma.m.iter_mut().zip(&grads).for_each(|(m, g)| *m = 0.1 * g);
            ma.v.iter_mut().zip(&grads).for_each(|(v, g)| *v = 0.01 * g * g);
            let mut mb = ma.clone();
            adam_step(&mut a, &grads, &mut ma, 0.05, t);

            let mut b = params.clone();
            let mut gb = grads.clone();
            b.rotate_left(r);
            gb.rotate_left(r);
            mb.m.rotate_left(r);
            mb.v.rotate_left(r);
            adam_step(&mut b, &gb, &mut mb, 0.05, t);
            b.rotate_right(r);
            prop_assert_eq!(a, b);
        }
    }
}
