use alloc::format;
use alloc::vec::Vec;

use crate::{Axis, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    U8,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::U8 => "u8",
            DType::F32 => "f32",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(DType::U8),
            "f32" => Ok(DType::F32),
            other => Err(Error::Format(format!("unknown dtype `{other}`"))),
        }
    }
}

/// Shape and storage details of a raw volume payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub dtype: DType,
    /// Physical size of a voxel; informational only.
    pub spacing: [f64; 3],
    /// True when the payload holds grayscale semantic labels.
    pub semantic_present: bool,
}

impl VolumeMeta {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Format(format!("volume dims must be ≥ 1, got {:?}", self.dims)));
        }
        if !self.spacing.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::Format(format!("voxel spacing must be positive, got {:?}", self.spacing)));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn payload_len(&self) -> usize {
        self.voxel_count() * self.dtype.size()
    }

    fn check_payload(&self, payload: &[u8]) -> Result<()> {
        self.validate()?;
        if payload.len() != self.payload_len() {
            return Err(Error::Format(format!(
                "payload is {} bytes, {:?} {} volume needs {}",
                payload.len(),
                self.dims,
                self.dtype.as_str(),
                self.payload_len()
            )));
        }
        Ok(())
    }
}

fn flat_index(dims: &[usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// Scalar intensity volume, `x` fastest. Values are nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) || data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!("{} values do not fill a {dims:?} volume", data.len())));
        }
        Ok(Volume { dims, spacing: [1.0; 3], data })
    }

    /// Decode a little-endian payload; `u8` voxels are scaled by 1/255.
    pub fn from_payload(payload: &[u8], meta: &VolumeMeta) -> Result<Self> {
        meta.check_payload(payload)?;
        let data = match meta.dtype {
            DType::U8 => payload.iter().map(|&b| b as f32 / 255.0).collect(),
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        };
        Ok(Volume { dims: meta.dims, spacing: meta.spacing, data })
    }

    /// Little-endian payload. `u8` output rounds `255·v` after clamping.
    pub fn to_payload(&self, dtype: DType) -> Vec<u8> {
        match dtype {
            DType::F32 => self.data.iter().flat_map(|v| v.to_le_bytes()).collect(),
            DType::U8 => self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8).collect(),
        }
    }

    pub fn meta(&self, dtype: DType) -> VolumeMeta {
        VolumeMeta { dims: self.dims, dtype, spacing: self.spacing, semantic_present: false }
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[flat_index(&self.dims, x, y, z)]
    }

    pub fn len_along(&self, axis: Axis) -> usize {
        self.dims[axis.normal()]
    }
}

/// Grayscale semantic label volume (palette gray values), `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub dims: [usize; 3],
    pub data: Vec<u8>,
}

impl LabelVolume {
    pub fn new(dims: [usize; 3], data: Vec<u8>) -> Result<Self> {
        if dims.contains(&0) || data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!("{} labels do not fill a {dims:?} volume", data.len())));
        }
        Ok(LabelVolume { dims, data })
    }

    pub fn from_payload(payload: &[u8], meta: &VolumeMeta) -> Result<Self> {
        if meta.dtype != DType::U8 {
            return Err(Error::Format("label volumes must be stored as u8".into()));
        }
        meta.check_payload(payload)?;
        Ok(LabelVolume { dims: meta.dims, data: payload.to_vec() })
    }

    pub fn meta(&self) -> VolumeMeta {
        VolumeMeta { dims: self.dims, dtype: DType::U8, spacing: [1.0; 3], semantic_present: true }
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[flat_index(&self.dims, x, y, z)]
    }
}

/// Copy the plane at index `k` along `axis` into a row-major image whose
/// columns follow the axis' `u` coordinate and rows its `v` coordinate.
pub(crate) fn plane_of<T: Copy>(dims: &[usize; 3], data: &[T], axis: Axis, k: usize) -> (usize, usize, Vec<T>) {
    let (ua, va) = axis.plane();
    let (w, h) = (dims[ua], dims[va]);
    let mut out = Vec::with_capacity(w * h);
    let mut c = [0usize; 3];
    c[axis.normal()] = k;
    for row in 0..h {
        c[va] = row;
        for col in 0..w {
            c[ua] = col;
            out.push(data[flat_index(dims, c[0], c[1], c[2])]);
        }
    }
    (w, h, out)
}

pub(crate) fn write_plane<T: Copy>(dims: &[usize; 3], data: &mut [T], axis: Axis, k: usize, image: &[T]) {
    let (ua, va) = axis.plane();
    let w = dims[ua];
    let mut c = [0usize; 3];
    c[axis.normal()] = k;
    for (i, v) in image.iter().enumerate() {
        c[ua] = i % w;
        c[va] = i / w;
        data[flat_index(dims, c[0], c[1], c[2])] = *v;
    }
}
