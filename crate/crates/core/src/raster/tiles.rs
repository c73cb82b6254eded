//! Binning of Gaussians into screen tiles by their bounded in-plane support.

use alloc::vec;
use alloc::vec::Vec;

use super::prepare::{pixel_box, PixelBox};
use super::SlicePlaneSpec;
use crate::factorization::FactorizedGaussian;
use crate::{Error, Result};

/// Per-tile lists of indices into the binned Gaussian sequence, each in the
/// same order as the input.
#[derive(Debug, Clone, PartialEq)]
pub struct TileLists {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileLists {
    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Pixel rectangle `(col0, col1, row0, row1)` (exclusive ends) of a tile.
    pub fn tile_rect(&self, tile: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let c0 = tx * self.tile_size;
        let r0 = ty * self.tile_size;
        (c0, (c0 + self.tile_size).min(width), r0, (r0 + self.tile_size).min(height))
    }
}

pub(crate) fn bin_boxes(spec: &SlicePlaneSpec, boxes: impl Iterator<Item = (usize, PixelBox)>, tile_size: usize) -> Result<TileLists> {
    if tile_size < 8 {
        return Err(Error::Config(alloc::format!("tile size must be at least 8 pixels, got {tile_size}")));
    }
    let tiles_x = spec.width.div_ceil(tile_size);
    let tiles_y = spec.height.div_ceil(tile_size);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for (idx, b) in boxes {
        for ty in b.row0 / tile_size..=b.row1 / tile_size {
            for tx in b.col0 / tile_size..=b.col1 / tile_size {
                lists[ty * tiles_x + tx].push(idx as u32);
            }
        }
    }
    Ok(TileLists { tile_size, tiles_x, tiles_y, lists })
}

/// Assign each Gaussian to every tile overlapped by the bounding box of its
/// `k_sigma` in-plane ellipse at the slice depth. Gaussians that are culled
/// by the marginal test, or whose box misses every pixel center, land in no
/// tile.
pub fn tile_partition(spec: &SlicePlaneSpec, gaussians: &[FactorizedGaussian], tile_size: usize) -> Result<TileLists> {
    spec.validate()?;
    let boxes = gaussians.iter().enumerate().filter_map(|(idx, fg)| {
        if fg.slice_cull(spec.depth, spec.k_sigma) {
            pixel_box(fg, spec).map(|b| (idx, b))
        } else {
            None
        }
    });
    bin_boxes(spec, boxes, tile_size)
}
