use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::palette::{semantic_to_rgb, SemanticPalette};
use super::volume::{plane_of, write_plane, LabelVolume, Volume};
use crate::{Axis, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// One axis-aligned image of a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub index: usize,
    /// Normalized depth `(index + 0.5) / n` along the stacking axis.
    pub depth: f64,
    /// Grayscale intensities, row-major `H·W`.
    pub intensity: Vec<f64>,
    /// Palette colors in `[0, 1]`, row-major `H·W·3`.
    pub semantic: Option<Vec<f64>>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    pub axis: Axis,
    pub width: usize,
    pub height: usize,
    pub slices: Vec<Slice>,
}

impl SliceStack {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn has_semantics(&self) -> bool {
        !self.slices.is_empty() && self.slices.iter().all(|s| s.semantic.is_some())
    }

    pub fn train(&self) -> impl Iterator<Item = &Slice> {
        self.slices.iter().filter(|s| s.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Slice> {
        self.slices.iter().filter(|s| s.split == Split::Test)
    }

    /// Attach per-slice palette colors from a label volume of the same shape.
    pub fn attach_semantics(&mut self, labels: &LabelVolume, palette: &SemanticPalette) -> Result<()> {
        let (ua, va) = self.axis.plane();
        let n = self.axis.normal();
        if labels.dims[ua] != self.width || labels.dims[va] != self.height || labels.dims[n] != self.slices.len() {
            return Err(Error::Shape(format!(
                "label volume {:?} does not match the {}×{}×{} stack",
                labels.dims,
                self.width,
                self.height,
                self.slices.len()
            )));
        }
        for s in &mut self.slices {
            let (_, _, gray) = plane_of(&labels.dims, &labels.data, self.axis, s.index);
            s.semantic = Some(semantic_to_rgb(&gray, palette)?);
        }
        Ok(())
    }
}

/// Cut a volume into its slices along `axis`, all marked as training slices.
pub fn extract_slices(volume: &Volume, axis: Axis) -> SliceStack {
    let n = volume.len_along(axis);
    let mut width = 0;
    let mut height = 0;
    let slices = (0..n)
        .map(|k| {
            let (w, h, img) = plane_of(&volume.dims, &volume.data, axis, k);
            width = w;
            height = h;
            Slice {
                index: k,
                depth: (k as f64 + 0.5) / n as f64,
                intensity: img.into_iter().map(f64::from).collect(),
                semantic: None,
                split: Split::Train,
            }
        })
        .collect();
    SliceStack { axis, width, height, slices }
}

/// Reassemble the intensity volume. Inverse of [`extract_slices`].
pub fn restack(stack: &SliceStack) -> Result<Volume> {
    let (ua, va) = stack.axis.plane();
    let mut dims = [0usize; 3];
    dims[ua] = stack.width;
    dims[va] = stack.height;
    dims[stack.axis.normal()] = stack.slices.len();
    let mut data = alloc::vec![0f32; dims.iter().product()];
    for (k, s) in stack.slices.iter().enumerate() {
        if s.index != k || s.intensity.len() != stack.width * stack.height {
            return Err(Error::Shape(format!("slice {k} is out of order or mis-sized")));
        }
        let img: Vec<f32> = s.intensity.iter().map(|v| *v as f32).collect();
        write_plane(&dims, &mut data, stack.axis, k, &img);
    }
    Volume::new(dims, data)
}

/// Mark an evenly spaced `round(fraction·n)` slices as training data and the
/// rest as held out. Index `k` of `m` goes to `round(k·(n−1)/(m−1))`.
pub fn make_split(stack: &mut SliceStack, fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let n = stack.slices.len();
    let m = (fraction * n as f64).round() as usize;
    if m < 2 {
        return Err(Error::Config(format!(
            "train fraction {fraction} of {n} slices leaves {m} training slices, need at least 2"
        )));
    }
    for s in &mut stack.slices {
        s.split = Split::Test;
    }
    let step = (n - 1) as f64 / (m - 1) as f64;
    for k in 0..m {
        let i = (k as f64 * step).round() as usize;
        stack.slices[i.min(n - 1)].split = Split::Train;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(dims: [usize; 3]) -> Volume {
        let n: usize = dims.iter().product();
        Volume::new(dims, (0..n).map(|i| i as f32 / n as f32).collect()).unwrap()
    }

    #[test]
    fn slice_geometry_follows_axis() {
        let v = ramp([4, 5, 6]);
        let z = extract_slices(&v, Axis::Z);
        assert_eq!((z.width, z.height, z.len()), (4, 5, 6));
        let x = extract_slices(&v, Axis::X);
        assert_eq!((x.width, x.height, x.len()), (5, 6, 4));
        // column = y, row = z for the x axis
        assert_eq!(x.slices[2].intensity[3 * 5 + 1] as f32, v.get(2, 1, 3));
        assert!((z.slices[0].depth - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn split_examples() {
        let v = ramp([4, 4, 160]);
        let mut s = extract_slices(&v, Axis::Z);
        make_split(&mut s, 0.95).unwrap();
        assert_eq!(s.train().count(), 152);
        assert_eq!(s.test().count(), 8);
        make_split(&mut s, 0.5).unwrap();
        assert_eq!(s.train().count(), 80);

        let mut small = extract_slices(&ramp([2, 2, 4]), Axis::Z);
        make_split(&mut small, 0.5).unwrap();
        let train: Vec<usize> = small.train().map(|s| s.index).collect();
        assert_eq!(train, [0, 3]);
        assert!(make_split(&mut small, 0.2).is_err());
        assert!(make_split(&mut small, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn restack_round_trips(nx in 1usize..6, ny in 1usize..6, nz in 1usize..6, a in 0usize..3) {
            let v = ramp([nx, ny, nz]);
            let axis = [Axis::X, Axis::Y, Axis::Z][a];
            let back = restack(&extract_slices(&v, axis)).unwrap();
            prop_assert_eq!(back.dims, v.dims);
            prop_assert!(back.data.iter().zip(&v.data).all(|(p, q)| p.to_bits() == q.to_bits()));
        }

        #[test]
        fn split_is_a_partition(n in 4usize..300, f in 0.05f64..0.95) {
            let mut s = extract_slices(&ramp([1, 1, n]), Axis::Z);
            let m = (f * n as f64).round() as usize;
            match make_split(&mut s, f) {
                Ok(()) => {
                    prop_assert_eq!(s.train().count(), m);
                    prop_assert_eq!(s.train().count() + s.test().count(), n);
                    prop_assert_eq!(s.slices[0].split, Split::Train);
                    prop_assert_eq!(s.slices[n - 1].split, Split::Train);
                }
                Err(_) => prop_assert!(m < 2),
            }
        }
    }
}
