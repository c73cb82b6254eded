//! Volumes, slice stacks, train/test splits, semantic palettes and the
//! synthetic phantom.

mod palette;
mod phantom;
mod slices;
mod volume;

pub use palette::{label_accuracy, rgb_to_label, semantic_to_rgb, PaletteEntry, SemanticPalette};
pub use phantom::{generate_phantom, Phantom, PHANTOM_INTENSITIES, PHANTOM_MIN_DIM};
pub use slices::{extract_slices, make_split, restack, Slice, SliceStack, Split};
pub use volume::{DType, LabelVolume, Volume, VolumeMeta};
