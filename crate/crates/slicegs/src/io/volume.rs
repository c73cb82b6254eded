//! Raw little-endian volumes with a `.desc` sidecar:
//!
//! ```text
//! dims = 64 64 64
//! dtype = f32
//! spacing = 1 1 1
//! semantic = false
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use slicegs_core::dataset::{DType, LabelVolume, Volume, VolumeMeta};

use super::kv;
use crate::error::{format_err, Error, Result};

/// Payload and descriptor paths for a volume stem (any extension is replaced).
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("raw"), path.with_extension("desc"))
}

pub fn parse_descriptor(text: &str) -> Result<VolumeMeta> {
    let mut dims = None;
    let mut dtype = None;
    let mut spacing = [1.0; 3];
    let mut semantic = false;
    for (key, value) in kv::parse(text)? {
        match key.as_str() {
            "dims" => {
                let d: Vec<usize> = kv::parse_list(&key, &value)?;
                let d: [usize; 3] = d.try_into().map_err(|_| format_err("`dims` needs three values"))?;
                dims = Some(d);
            }
            "dtype" => dtype = Some(DType::parse(&value)?),
            "spacing" => {
                let s: Vec<f64> = kv::parse_list(&key, &value)?;
                spacing = s.try_into().map_err(|_| format_err("`spacing` needs three values"))?;
            }
            "semantic" => semantic = kv::parse_bool(&key, &value)?,
            other => return Err(format_err(format!("unknown descriptor key `{other}`"))),
        }
    }
    let meta = VolumeMeta {
        dims: dims.ok_or_else(|| format_err("descriptor lacks `dims`"))?,
        dtype: dtype.ok_or_else(|| format_err("descriptor lacks `dtype`"))?,
        spacing,
        semantic_present: semantic,
    };
    meta.validate()?;
    Ok(meta)
}

pub fn descriptor_text(meta: &VolumeMeta) -> String {
    let [x, y, z] = meta.dims;
    let [sx, sy, sz] = meta.spacing;
    format!(
        "dims = {x} {y} {z}\ndtype = {}\nspacing = {sx} {sy} {sz}\nsemantic = {}\n",
        meta.dtype.as_str(),
        meta.semantic_present
    )
}

fn read_pair(path: &Path) -> Result<(Vec<u8>, VolumeMeta)> {
    let (raw, desc) = volume_paths(path);
    let text = fs::read_to_string(&desc).map_err(Error::io(&desc))?;
    let meta = parse_descriptor(&text).map_err(|e| match e {
        Error::Core(slicegs_core::Error::Format(m)) => format_err(format!("{}: {m}", desc.display())),
        other => other,
    })?;
    let payload = fs::read(&raw).map_err(Error::io(&raw))?;
    Ok((payload, meta))
}

fn write_pair(path: &Path, payload: &[u8], meta: &VolumeMeta) -> Result<()> {
    let (raw, desc) = volume_paths(path);
    fs::write(&raw, payload).map_err(Error::io(&raw))?;
    fs::write(&desc, descriptor_text(meta)).map_err(Error::io(&desc))
}

pub fn read_volume(path: &Path) -> Result<(Volume, VolumeMeta)> {
    let (payload, meta) = read_pair(path)?;
    Ok((Volume::from_payload(&payload, &meta)?, meta))
}

pub fn write_volume(path: &Path, volume: &Volume, dtype: DType) -> Result<()> {
    write_pair(path, &volume.to_payload(dtype), &volume.meta(dtype))
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    let (payload, meta) = read_pair(path)?;
    Ok(LabelVolume::from_payload(&payload, &meta)?)
}

pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<()> {
    write_pair(path, &labels.data, &labels.meta())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trip() {
        let meta = VolumeMeta { dims: [4, 5, 6], dtype: DType::F32, spacing: [0.5, 1.0, 2.5], semantic_present: true };
        assert_eq!(parse_descriptor(&descriptor_text(&meta)).unwrap(), meta);
    }

    #[test]
    fn descriptor_errors() {
        assert!(parse_descriptor("dims = 4 4\ndtype = u8\n").is_err());
        assert!(parse_descriptor("dims = 4 4 4\ndtype = f64\n").is_err());
        assert!(parse_descriptor("dims = 4 4 4\n").is_err());
        assert!(parse_descriptor("dims = 4 4 4\ndtype = u8\ncolor = red\n").is_err());
        assert!(parse_descriptor("dims = 4 0 4\ndtype = u8\n").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::new([2, 3, 4], (0..24).map(|i| i as f32 * 0.04 - 0.1).collect()).unwrap();
        let p = dir.path().join("vol.raw");
        write_volume(&p, &v, DType::F32).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 96);
        let (back, meta) = read_volume(&dir.path().join("vol")).unwrap();
        assert_eq!(back, v);
        assert_eq!(meta.dtype, DType::F32);

        let l = LabelVolume::new([2, 2, 2], vec![0, 85, 170, 255, 0, 0, 85, 85]).unwrap();
        write_labels(&dir.path().join("lab"), &l).unwrap();
        assert_eq!(read_labels(&dir.path().join("lab.desc")).unwrap(), l);
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v");
        fs::write(p.with_extension("desc"), "dims = 2 2 2\ndtype = u8\n").unwrap();
        fs::write(p.with_extension("raw"), [0u8; 7]).unwrap();
        let err = read_volume(&p).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let missing = read_volume(&dir.path().join("nope")).unwrap_err();
        assert!(missing.to_string().contains("nope.desc"));
    }
}
