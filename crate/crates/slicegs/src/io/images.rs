//! 8-bit PNG export, raw `f32` dumps and PNG slice-stack directories.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Rgb, RgbImage};
use slicegs_core::dataset::{Slice, SliceStack, Split};
use slicegs_core::{Axis, Error as CoreError};

use crate::error::{Error, Result};

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn gray_image(values: &[f64], width: usize, height: usize) -> GrayImage {
    GrayImage::from_fn(width as u32, height as u32, |x, y| image::Luma([to_u8(values[y as usize * width + x as usize])]))
}

pub fn rgb_image(values: &[f64], width: usize, height: usize) -> RgbImage {
    RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let i = 3 * (y as usize * width + x as usize);
        Rgb([to_u8(values[i]), to_u8(values[i + 1]), to_u8(values[i + 2])])
    })
}

/// Ground truth on the left, render on the right; intensity on the top
/// row and, when both semantic maps are given, semantics below.
pub fn side_by_side(
    width: usize,
    height: usize,
    truth: &[f64],
    render: &[f64],
    semantics: Option<(&[f64], &[f64])>,
) -> RgbImage {
    let rows = if semantics.is_some() { 2 } else { 1 };
    let mut out: RgbImage = ImageBuffer::new(2 * width as u32, (rows * height) as u32);
    let gray = |v: f64| Rgb([to_u8(v); 3]);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            out.put_pixel(x as u32, y as u32, gray(truth[i]));
            out.put_pixel((x + width) as u32, y as u32, gray(render[i]));
            if let Some((st, sr)) = semantics {
                let px = |s: &[f64]| Rgb([to_u8(s[3 * i]), to_u8(s[3 * i + 1]), to_u8(s[3 * i + 2])]);
                out.put_pixel(x as u32, (y + height) as u32, px(st));
                out.put_pixel((x + width) as u32, (y + height) as u32, px(sr));
            }
        }
    }
    out
}

pub fn save_png<P, C>(path: &Path, img: &ImageBuffer<P, C>) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png).map_err(Error::image(path))
}

/// Little-endian `f32` values, no header.
pub fn write_raw_f32(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(Error::io(path))
}

/// `slice_0007.png`-style name, padded to at least four digits.
pub fn slice_file_name(index: usize, count: usize) -> String {
    let digits = count.saturating_sub(1).to_string().len().max(4);
    format!("slice_{index:0digits$}.png")
}

pub fn export_stack(stack: &SliceStack, intensity_dir: &Path, semantic_dir: Option<&Path>) -> Result<()> {
    fs::create_dir_all(intensity_dir).map_err(Error::io(intensity_dir))?;
    if let Some(d) = semantic_dir {
        fs::create_dir_all(d).map_err(Error::io(d))?;
    }
    for s in &stack.slices {
        let name = slice_file_name(s.index, stack.len());
        save_png(&intensity_dir.join(&name), &gray_image(&s.intensity, stack.width, stack.height))?;
        if let (Some(d), Some(sem)) = (semantic_dir, &s.semantic) {
            save_png(&d.join(&name), &rgb_image(sem, stack.width, stack.height))?;
        }
    }
    Ok(())
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Core(CoreError::Data(format!("{}: no PNG slices found", dir.display()))));
    }
    Ok(files)
}

/// Read a directory of 8-bit PNG slices (sorted by file name) as a stack
/// along `axis`. Intensities are converted to gray; semantic images are
/// read as RGB and must match in count and size.
pub fn import_stack(intensity_dir: &Path, semantic_dir: Option<&Path>, axis: Axis) -> Result<SliceStack> {
    let files = png_files(intensity_dir)?;
    let sem_files = semantic_dir.map(png_files).transpose()?;
    if let Some(s) = &sem_files {
        if s.len() != files.len() {
            return Err(Error::Core(CoreError::Data(format!(
                "{} intensity slices but {} semantic slices",
                files.len(),
                s.len()
            ))));
        }
    }
    let n = files.len();
    let mut size = None;
    let mut slices = Vec::with_capacity(n);
    for (k, f) in files.iter().enumerate() {
        let img = image::open(f).map_err(Error::image(f))?.to_luma8();
        let dims = (img.width() as usize, img.height() as usize);
        if *size.get_or_insert(dims) != dims {
            return Err(Error::Core(CoreError::Data(format!("{}: size differs from the first slice", f.display()))));
        }
        let semantic = match &sem_files {
            Some(s) => {
                let rgb = image::open(&s[k]).map_err(Error::image(&s[k]))?.to_rgb8();
                if (rgb.width() as usize, rgb.height() as usize) != dims {
                    return Err(Error::Core(CoreError::Data(format!("{}: size differs from its intensity slice", s[k].display()))));
                }
                Some(rgb.as_raw().iter().map(|v| *v as f64 / 255.0).collect())
            }
            None => None,
        };
        slices.push(Slice {
            index: k,
            depth: (k as f64 + 0.5) / n as f64,
            intensity: img.as_raw().iter().map(|v| *v as f64 / 255.0).collect(),
            semantic,
            split: Split::Train,
        });
    }
    let (width, height) = size.unwrap_or((0, 0));
    Ok(SliceStack { axis, width, height, slices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use slicegs_core::dataset::{extract_slices, generate_phantom};

    #[test]
    fn file_names_are_padded() {
        assert_eq!(slice_file_name(7, 64), "slice_0007.png");
        assert_eq!(slice_file_name(12, 20000), "slice_00012.png");
    }

    #[test]
    fn png_stack_round_trip_is_exact_on_8_bit_values() {
        let p = generate_phantom(1, [32, 32, 32]).unwrap();
        let mut stack = extract_slices(&p.volume, Axis::X);
        stack.attach_semantics(&p.labels, &p.palette).unwrap();
        for s in &mut stack.slices {
            s.intensity.iter_mut().for_each(|v| *v = to_u8(*v) as f64 / 255.0);
        }
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("i"), dir.path().join("s"));
        export_stack(&stack, &a, Some(&b)).unwrap();
        let back = import_stack(&a, Some(&b), Axis::X).unwrap();
        assert_eq!(back, stack);
    }

    #[test]
    fn side_by_side_layout() {
        let img = side_by_side(2, 1, &[0.0, 1.0], &[1.0, 0.0], Some((&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0], &[0.0; 6])));
        assert_eq!((img.width(), img.height()), (4, 2));
        assert_eq!(img.get_pixel(1, 0), &Rgb([255; 3]));
        assert_eq!(img.get_pixel(2, 0), &Rgb([255; 3]));
        assert_eq!(img.get_pixel(0, 1), &Rgb([255, 0, 0]));
        assert_eq!(img.get_pixel(3, 1), &Rgb([0; 3]));
    }

    #[test]
    fn empty_directory_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(import_stack(dir.path(), None, Axis::Z).unwrap_err().exit_code(), 2);
    }
}
