use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaletteEntry {
    pub name: String,
    pub gray: u8,
    pub rgb: [u8; 3],
}

/// Mapping between grayscale label values and display colors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticPalette {
    entries: Vec<PaletteEntry>,
}

impl SemanticPalette {
    pub fn new(entries: Vec<PaletteEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("palette has no entries".into()));
        }
        let grays: BTreeSet<u8> = entries.iter().map(|e| e.gray).collect();
        let colors: BTreeSet<[u8; 3]> = entries.iter().map(|e| e.rgb).collect();
        if grays.len() != entries.len() || colors.len() != entries.len() {
            return Err(Error::Config("palette gray values and colors must be distinct".into()));
        }
        Ok(SemanticPalette { entries })
    }

    /// Background, outer, middle and core classes of the phantom.
    pub fn default_four_class() -> Self {
        let e = |name: &str, gray, rgb| PaletteEntry { name: name.into(), gray, rgb };
        SemanticPalette {
            entries: alloc::vec![
                e("background", 0, [0, 0, 0]),
                e("outer", 85, [255, 0, 0]),
                e("middle", 170, [0, 255, 0]),
                e("core", 255, [0, 0, 255]),
            ],
        }
    }

    pub fn entries(&self) -> &[PaletteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn color(&self, label: usize) -> [f64; 3] {
        self.entries[label].rgb.map(|c| c as f64 / 255.0)
    }

    pub fn label_of_gray(&self, gray: u8) -> Option<usize> {
        self.entries.iter().position(|e| e.gray == gray)
    }
}

/// Replace each gray label by its palette color, scaled to `[0, 1]`.
pub fn semantic_to_rgb(gray: &[u8], palette: &SemanticPalette) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(gray.len() * 3);
    let mut unknown = BTreeSet::new();
    for &g in gray {
        match palette.label_of_gray(g) {
            Some(l) => out.extend(palette.color(l)),
            None => {
                unknown.insert(g);
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::Data(format!("gray values {unknown:?} are not in the palette")));
    }
    Ok(out)
}

/// Nearest palette label for each RGB triple; ties go to the lower index.
pub fn rgb_to_label(rgb: &[f64], palette: &SemanticPalette) -> Vec<usize> {
    let colors: Vec<[f64; 3]> = (0..palette.len()).map(|l| palette.color(l)).collect();
    rgb.chunks_exact(3)
        .map(|px| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (l, c) in colors.iter().enumerate() {
                let d: f64 = (0..3).map(|i| (px[i] - c[i]) * (px[i] - c[i])).sum();
                if d < best_d {
                    best_d = d;
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// Fraction of pixels whose nearest label matches the target's.
pub fn label_accuracy(pred_rgb: &[f64], target_rgb: &[f64], palette: &SemanticPalette) -> Result<f64> {
    if pred_rgb.len() != target_rgb.len() || pred_rgb.is_empty() || pred_rgb.len() % 3 != 0 {
        return Err(Error::Shape(format!(
            "semantic images of {} and {} values cannot be compared",
            pred_rgb.len(),
            target_rgb.len()
        )));
    }
    let p = rgb_to_label(pred_rgb, palette);
    let t = rgb_to_label(target_rgb, palette);
    let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / p.len() as f64)
}
