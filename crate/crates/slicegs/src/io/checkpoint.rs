//! Versioned binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "SLGSCKPT" | version u32
//! N K R C H iteration adam_step adam_skipped  (u64 each) | fusion u8
//! text_len u64 | run text (UTF-8 key = value)
//! per parameter group: values (f64)
//! per parameter group: Adam m then v (f64)
//! densify statistics: norm sums (f64), counts (u32)
//! checksum u64 (FNV-1a over everything before it)
//! ```

use std::fs;
use std::path::Path;

use slicegs_core::dataset::SliceStack;
use slicegs_core::gaussian::GaussianSet;
use slicegs_core::optimizer::{AdamMoments, AdamState, DensifyStats, TrainState};
use slicegs_core::raster::{ParamGroup, Scene};
use slicegs_core::{Axis, DecoderMlp, Fusion, TriPlaneField};

use super::config::{apply_key, config_text};
use super::kv;
use crate::error::{format_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"SLGSCKPT";
pub const VERSION: u32 = 1;

/// Dataset facts stored next to the training state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub axis: Axis,
    pub fraction: f64,
    /// Source volume size, if known.
    pub dims: Option<[usize; 3]>,
}

impl RunInfo {
    pub fn for_stack(stack: &SliceStack, fraction: f64) -> Self {
        let (ua, va) = stack.axis.plane();
        let mut dims = [0; 3];
        dims[ua] = stack.width;
        dims[va] = stack.height;
        dims[stack.axis.normal()] = stack.len();
        RunInfo { axis: stack.axis, fraction, dims: Some(dims) }
    }

    /// Image size of a slice along `axis`, if the volume size is known.
    pub fn slice_size(&self, axis: Axis) -> Option<(usize, usize)> {
        let (ua, va) = axis.plane();
        self.dims.map(|d| (d[ua], d[va]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub run: RunInfo,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn run_text(c: &Checkpoint) -> String {
    let mut s = config_text(&c.state.config);
    s.push_str(&format!("axis = {}\nfraction = {}\n", c.run.axis, c.run.fraction));
    if let Some([x, y, z]) = c.run.dims {
        s.push_str(&format!("volume_dims = {x} {y} {z}\n"));
    }
    s
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(c: &Checkpoint) -> Vec<u8> {
    let st = &c.state;
    let scene = &st.scene;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        scene.gaussians.len(),
        scene.semantic_dim(),
        scene.field.resolution(),
        scene.field.channels(),
        scene.decoder.hidden_dim(),
        st.iteration,
    ] {
        put_u64(&mut out, v as u64);
    }
    put_u64(&mut out, st.adam.step);
    put_u64(&mut out, st.adam.skipped);
    out.push(match scene.field.fusion() {
        Fusion::Concat => 0,
        Fusion::Sum => 1,
    });
    let text = run_text(c);
    put_u64(&mut out, text.len() as u64);
    out.extend_from_slice(text.as_bytes());
    for g in ParamGroup::ALL {
        put_f64s(&mut out, scene.group(g));
    }
    for g in ParamGroup::ALL {
        put_f64s(&mut out, &st.adam.moments(g).m);
        put_f64s(&mut out, &st.adam.moments(g).v);
    }
    put_f64s(&mut out, &st.stats.norm_sum);
    for n in &st.stats.count {
        out.extend_from_slice(&n.to_le_bytes());
    }
    let sum = fnv1a(&out);
    put_u64(&mut out, sum);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| format_err("checkpoint is truncated"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| format_err("checkpoint size field overflows"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| format_err("checkpoint size field overflows"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(format_err("not a slicegs checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(format!("unsupported checkpoint version {version} (this build reads {VERSION})")));
    }
    if bytes.len() < 20 {
        return Err(format_err("checkpoint is truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(format_err("checkpoint checksum mismatch (corrupted file)"));
    }
    let mut r = Reader { bytes: body, at: 12 };
    let n = r.usize()?;
    let k = r.usize()?;
    let res = r.usize()?;
    let ch = r.usize()?;
    let hidden = r.usize()?;
    let iteration = r.usize()?;
    let step = r.u64()?;
    let skipped = r.u64()?;
    let fusion_tag = r.take(1)?[0];
    let text_len = r.usize()?;
    let text = std::str::from_utf8(r.take(text_len)?).map_err(|_| format_err("checkpoint text is not UTF-8"))?;

    let mut config = slicegs_core::optimizer::TrainConfig::default();
    let mut run = RunInfo { axis: Axis::Z, fraction: 0.5, dims: None };
    for (key, value) in kv::parse(text)? {
        if apply_key(&mut config, &key, &value)? {
            continue;
        }
        match key.as_str() {
            "axis" => run.axis = value.parse()?,
            "fraction" => run.fraction = kv::parse_value(&key, &value)?,
            "volume_dims" => {
                let d: Vec<usize> = kv::parse_list(&key, &value)?;
                run.dims = Some(d.try_into().map_err(|_| format_err("`volume_dims` needs three values"))?);
            }
            other => return Err(format_err(format!("unknown checkpoint key `{other}`"))),
        }
    }
    let fusion = match fusion_tag {
        0 => Fusion::Concat,
        1 => Fusion::Sum,
        t => return Err(format_err(format!("unknown fusion tag {t}"))),
    };
    if fusion != config.fusion {
        return Err(format_err("checkpoint header and configuration disagree on fusion"));
    }

    let mut gaussians = GaussianSet::new(k);
    gaussians.positions = vec![[0.0; 3]; n];
    gaussians.log_scales = vec![[0.0; 3]; n];
    gaussians.rotations = vec![[0.0; 4]; n];
    gaussians.raw_opacities = vec![0.0; n];
    gaussians.base_colors = vec![[0.0; 3]; n];
    gaussians.base_semantics = vec![0.0; n * k];
    let field = TriPlaneField::zeros(res, ch, fusion)?;
    let decoder = DecoderMlp::zeros(field.feature_dim(), hidden, k)?;
    let mut scene = Scene::new(gaussians, field, decoder)?;
    for g in ParamGroup::ALL {
        let len = scene.group(g).len();
        let vals = r.f64s(len)?;
        scene.group_mut(g).copy_from_slice(&vals);
    }
    let mut groups = Vec::with_capacity(ParamGroup::ALL.len());
    for g in ParamGroup::ALL {
        let len = scene.group(g).len();
        groups.push(AdamMoments { m: r.f64s(len)?, v: r.f64s(len)? });
    }
    let norm_sum = r.f64s(n)?;
    let count = r.take(4 * n)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    if r.at != body.len() {
        return Err(format_err("checkpoint has trailing bytes"));
    }
    let state = TrainState {
        config,
        scene,
        adam: AdamState { groups, step, skipped },
        stats: DensifyStats { norm_sum, count },
        iteration,
    };
    state.check()?;
    Ok(Checkpoint { state, run })
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    fs::write(path, encode(c)).map_err(Error::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes).map_err(|e| match e {
        Error::Core(slicegs_core::Error::Format(m)) => format_err(format!("{}: {m}", path.display())),
        other => other,
    })
}
