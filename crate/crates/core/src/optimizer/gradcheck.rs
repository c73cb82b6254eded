use alloc::vec;
use alloc::vec::Vec;

use crate::raster::{backward_slice, render_slice, GradientBuffer, ParamGroup, PixelGradients, RasterOptions, Scene, SlicePlaneSpec};
use crate::Result;

/// Relative errors below this denominator are measured against it instead.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupError {
    pub group: ParamGroup,
    pub max_relative: f64,
    pub max_absolute: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_relative(&self) -> f64 {
        self.groups.iter().map(|g| g.max_relative).fold(0.0, f64::max)
    }

    pub fn group(&self, group: ParamGroup) -> Option<&GroupError> {
        self.groups.iter().find(|g| g.group == group)
    }
}

fn outputs(scene: &Scene, spec: &SlicePlaneSpec, opts: &RasterOptions) -> Result<Vec<f64>> {
    let out = render_slice(scene, spec, opts)?;
    Ok(out.intensity.into_iter().chain(out.semantic).collect())
}

/// `Σ plus − Σ minus`, differenced per value first so that rounding in the
/// large sums does not swamp small gradients.
fn summed_difference(plus: &[f64], minus: &[f64]) -> f64 {
    plus.iter().zip(minus).map(|(p, m)| p - m).sum()
}

/// Central differences with step `h` against the analytic backward pass for
/// the loss "sum of every rendered value", over every parameter.
pub fn grad_check(scene: &Scene, spec: &SlicePlaneSpec, h: f64) -> Result<GradCheckReport> {
    grad_check_with(scene, spec, h, |_| {})
}

/// [`grad_check`] with a hook that may alter the analytic gradients before
/// comparison.
pub fn grad_check_with(
    scene: &Scene,
    spec: &SlicePlaneSpec,
    h: f64,
    mut tamper: impl FnMut(&mut GradientBuffer),
) -> Result<GradCheckReport> {
    let opts = RasterOptions { tile_size: 8, deterministic: true };
    let forward = render_slice(scene, spec, &opts)?;
    let n = spec.pixel_count();
    let upstream = PixelGradients { intensity: vec![1.0; 3 * n], semantic: vec![1.0; scene.semantic_dim() * n] };
    let mut analytic = backward_slice(scene, spec, &opts, &forward, &upstream)?;
    tamper(&mut analytic);

    let mut probe = scene.clone();
    let mut groups = Vec::with_capacity(ParamGroup::ALL.len());
    for group in ParamGroup::ALL {
        let len = scene.group(group).len();
        let mut worst = GroupError { group, max_relative: 0.0, max_absolute: 0.0, checked: len };
        for i in 0..len {
            let x = scene.group(group)[i];
            probe.group_mut(group)[i] = x + h;
            let plus = outputs(&probe, spec, &opts)?;
            probe.group_mut(group)[i] = x - h;
            let minus = outputs(&probe, spec, &opts)?;
            probe.group_mut(group)[i] = x;
            let numeric = summed_difference(&plus, &minus) / (2.0 * h);
            let a = analytic.group(group)[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst.max_absolute = worst.max_absolute.max(abs);
            worst.max_relative = worst.max_relative.max(rel);
        }
        groups.push(worst);
    }
    Ok(GradCheckReport { groups })
}
