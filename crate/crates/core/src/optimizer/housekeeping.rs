use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::adam::AdamState;
use super::config::MIN_GAUSSIANS;
use crate::gaussian::covariance_factors;
use crate::raster::{GradientBuffer, Scene};
use crate::triplane::modulate;
use crate::{sigmoid, Result};

/// Opacity each Gaussian is rendered with, after decoder modulation.
fn effective_opacity(scene: &Scene) -> Result<Vec<f64>> {
    let gs = &scene.gaussians;
    (0..gs.len())
        .map(|i| {
            let raw = gs.params(i);
            let res = scene.decoder.decode(&scene.field.fuse(&raw.position))?;
            Ok(sigmoid(modulate(&raw, &res).raw_opacity))
        })
        .collect()
}

/// Remove Gaussians whose rendered opacity is below `threshold`, keeping at
/// least [`MIN_GAUSSIANS`] (the most opaque ones, earlier index first on
/// ties). Surviving Gaussians keep their relative order. Returns the number
/// removed.
pub fn prune(scene: &mut Scene, adam: Option<&mut AdamState>, threshold: f64) -> Result<usize> {
    let n = scene.gaussians.len();
    let alpha = effective_opacity(scene)?;
    let mut keep: Vec<bool> = alpha.iter().map(|a| *a >= threshold).collect();
    let floor = MIN_GAUSSIANS.min(n);
    if keep.iter().filter(|k| **k).count() < floor {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| alpha[*b].total_cmp(&alpha[*a]).then(a.cmp(b)));
        keep = vec![false; n];
        order[..floor].iter().for_each(|i| keep[*i] = true);
    }
    let removed = keep.iter().filter(|k| !**k).count();
    if removed > 0 {
        scene.gaussians.retain_mask(&keep);
        if let Some(st) = adam {
            st.retain_gaussians(&keep, scene.semantic_dim());
        }
    }
    Ok(removed)
}

/// Running positional gradient norms used to pick Gaussians to split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensifyStats {
    pub norm_sum: Vec<f64>,
    /// Iterations in which the Gaussian received any positional gradient.
    pub count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        DensifyStats { norm_sum: vec![0.0; n], count: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.norm_sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norm_sum.is_empty()
    }

    pub fn record(&mut self, grads: &GradientBuffer) {
        for (i, g) in grads.positions.iter().enumerate() {
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if norm > 0.0 && norm.is_finite() {
                self.norm_sum[i] += norm;
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.norm_sum[i] / self.count[i] as f64
        }
    }

    pub fn reset(&mut self, n: usize) {
        self.norm_sum.clear();
        self.norm_sum.resize(n, 0.0);
        self.count.clear();
        self.count.resize(n, 0);
    }

    pub fn retain(&mut self, keep: &[bool]) {
        let mut i = 0;
        self.norm_sum.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut i = 0;
        self.count.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }
}

const SPLIT_SHRINK: f64 = 1.6;

/// Split every Gaussian whose mean positional gradient norm exceeds
/// `threshold` into two children offset by half a standard deviation along
/// its longest axis, with scales shrunk by 1.6. The first child takes the
/// parent's slot and the second is appended. Largest gradients split first
/// while the count stays within `max_gaussians`. Statistics are reset.
/// Returns the number of splits.
pub fn densify(
    scene: &mut Scene,
    adam: Option<&mut AdamState>,
    stats: &mut DensifyStats,
    threshold: f64,
    max_gaussians: usize,
) -> Result<usize> {
    let n = scene.gaussians.len();
    let k = scene.semantic_dim();
    let mut picks: Vec<usize> = (0..n).filter(|i| stats.mean(*i) > threshold).collect();
    picks.sort_by(|a, b| stats.mean(*b).total_cmp(&stats.mean(*a)).then(a.cmp(b)));
    picks.truncate(max_gaussians.saturating_sub(n));
    picks.sort_unstable();

    let mut children = Vec::with_capacity(picks.len());
    for &i in &picks {
        let parent = scene.gaussians.params(i);
        let (_, f) = covariance_factors(&parent.log_scale, &parent.rotation)?;
        let axis = (0..3).max_by(|a, b| f.scale[*a].total_cmp(&f.scale[*b])).unwrap_or(0);
        let sigma = f.scale[axis];
        let dir = [f.rotation[0][axis], f.rotation[1][axis], f.rotation[2][axis]];
        let mut a = parent.clone();
        let mut b = parent;
        for d in 0..3 {
            a.position[d] += 0.5 * sigma * dir[d];
            b.position[d] -= 0.5 * sigma * dir[d];
            a.log_scale[d] -= SPLIT_SHRINK.ln();
            b.log_scale[d] -= SPLIT_SHRINK.ln();
        }
        scene.gaussians.positions[i] = a.position;
        scene.gaussians.log_scales[i] = a.log_scale;
        children.push(b);
    }
    let added = children.len();
    for c in children {
        scene.gaussians.push(c)?;
    }
    if let Some(st) = adam {
        for &i in &picks {
            st.duplicate_gaussian(i, k);
        }
    }
    stats.reset(scene.gaussians.len());
    Ok(added)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_scene, SceneShape};
    use crate::raster::ParamGroup;

    fn scene(n: usize) -> Scene {
        let shape = SceneShape { gaussians: n, texel_amplitude: 0.0, ..SceneShape::default() };
        let mut s = random_scene(&shape, 3).unwrap();
        s.decoder.params_mut().fill(0.0);
        s.gaussians.raw_opacities.fill(0.0);
        s
    }

    #[test]
    fn prune_identity_and_single_removal() {
        let mut s = scene(30);
        let before = s.clone();
        assert_eq!(prune(&mut s, None, 0.4).unwrap(), 0);
        assert_eq!(s, before);
        s.gaussians.raw_opacities[7] = -10.0;
        let mut st = AdamState::new(&s);
        assert_eq!(prune(&mut s, Some(&mut st), 0.4).unwrap(), 1);
        assert_eq!(s.gaussians.len(), 29);
        assert!(st.matches(&s));
        assert_eq!(s.gaussians.positions[7], before.gaussians.positions[8]);
    }

    #[test]
    fn prune_floor_keeps_most_opaque() {
        let mut s = scene(30);
        for i in 0..30 {
            s.gaussians.raw_opacities[i] = -(i as f64) * 0.1;
        }
        s.gaussians.raw_opacities[29] = 5.0;
        prune(&mut s, None, 1.0).unwrap();
        assert_eq!(s.gaussians.len(), MIN_GAUSSIANS);
        assert_eq!(s.gaussians.raw_opacities[0], 0.0);
        assert_eq!(*s.gaussians.raw_opacities.last().unwrap(), 5.0);

        let mut small = scene(5);
        prune(&mut small, None, 1.0).unwrap();
        assert_eq!(small.gaussians.len(), 5);
    }

    fn stats_with(n: usize, hot: &[(usize, f64)]) -> DensifyStats {
        let mut st = DensifyStats::new(n);
        for &(i, g) in hot {
            st.norm_sum[i] = 2.0 * g;
            st.count[i] = 2;
        }
        st
    }

    #[test]
    fn densify_identity_below_threshold() {
        let mut s = scene(20);
        let before = s.clone();
        let mut st = stats_with(20, &[(3, 0.5)]);
        assert_eq!(densify(&mut s, None, &mut st, 1.0, 100).unwrap(), 0);
        assert_eq!(s, before);
        assert_eq!(st, DensifyStats::new(20));
    }

    #[test]
    fn densify_split_geometry() {
        let mut s = scene(20);
        s.gaussians.rotations[4] = [1.0, 0.0, 0.0, 0.0];
        s.gaussians.log_scales[4] = [0.05f64.ln(), 0.2f64.ln(), 0.1f64.ln()];
        let parent = s.gaussians.params(4);
        let mut adam = AdamState::new(&s);
        adam.moments_mut(ParamGroup::Position).m.fill(1.0);
        let mut st = stats_with(20, &[(4, 2.0)]);
        assert_eq!(densify(&mut s, Some(&mut adam), &mut st, 1.0, 100).unwrap(), 1);
        assert_eq!(s.gaussians.len(), 21);
        let a = s.gaussians.params(4);
        let b = s.gaussians.params(20);
        assert!((a.position[1] - parent.position[1] - 0.1).abs() < 1e-12);
        assert!((b.position[1] - parent.position[1] + 0.1).abs() < 1e-12);
        assert!((a.position[0] - parent.position[0]).abs() < 1e-15);
        assert!((a.log_scale[1] - (0.2f64 / 1.6).ln()).abs() < 1e-12);
        assert_eq!(a.base_semantic, parent.base_semantic);
        assert_eq!(b.raw_opacity, parent.raw_opacity);
        assert!(adam.matches(&s));
        assert_eq!(&adam.moments(ParamGroup::Position).m[12..15], &[1.0; 3]);
        assert_eq!(&adam.moments(ParamGroup::Position).m[60..63], &[1.0; 3]);
        assert_eq!(st.len(), 21);
        assert!(s.is_finite());
    }

    #[test]
    fn densify_respects_cap() {
        let mut s = scene(20);
        let mut st = stats_with(20, &[(1, 2.0), (5, 4.0), (9, 3.0)]);
        assert_eq!(densify(&mut s, None, &mut st, 1.0, 22).unwrap(), 2);
        assert_eq!(s.gaussians.len(), 22);
        let mut st = stats_with(22, &[(1, 2.0)]);
        assert_eq!(densify(&mut s, None, &mut st, 1.0, 22).unwrap(), 0);
        assert_eq!(st, DensifyStats::new(22));
    }

    #[test]
    fn stats_accumulate_visible_iterations() {
        let s = scene(3);
        let mut g = GradientBuffer::zeros_like(&s);
        g.positions[1] = [3.0, 4.0, 0.0];
        let mut st = DensifyStats::new(3);
        st.record(&g);
        g.positions[1] = [0.0, 0.0, 1.0];
        st.record(&g);
        assert_eq!(st.count, [0, 2, 0]);
        assert_eq!(st.mean(1), 3.0);
        assert_eq!(st.mean(0), 0.0);
    }
}
