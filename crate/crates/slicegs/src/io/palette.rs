//! Palette text files, one label per line: `name gray r g b`.

use std::fs;
use std::path::Path;

use slicegs_core::dataset::{PaletteEntry, SemanticPalette};

use super::kv::parse_value;
use crate::error::{format_err, Error, Result};

pub fn parse_palette(text: &str) -> Result<SemanticPalette> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(format_err(format!("palette line {}: expected `name gray r g b`", n + 1)));
        }
        entries.push(PaletteEntry {
            name: f[0].to_string(),
            gray: parse_value("gray", f[1])?,
            rgb: [parse_value("r", f[2])?, parse_value("g", f[3])?, parse_value("b", f[4])?],
        });
    }
    Ok(SemanticPalette::new(entries)?)
}

pub fn palette_text(palette: &SemanticPalette) -> String {
    let mut s = String::from("# name gray r g b\n");
    for e in palette.entries() {
        s.push_str(&format!("{} {} {} {} {}\n", e.name, e.gray, e.rgb[0], e.rgb[1], e.rgb[2]));
    }
    s
}

pub fn read_palette(path: &Path) -> Result<SemanticPalette> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_palette(&text)
}

pub fn write_palette(path: &Path, palette: &SemanticPalette) -> Result<()> {
    fs::write(path, palette_text(palette)).map_err(Error::io(path))
}
