use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use slicegs_core::dataset::{
    extract_slices, generate_phantom, make_split, restack, DType, SemanticPalette, Slice, SliceStack, Split,
};
use slicegs_core::fixtures::{gradcheck_scene, gradcheck_spec};
use slicegs_core::metrics::MetricReport;
use slicegs_core::optimizer::{evaluate, grad_check_with, GradCheckReport, TrainConfig, Trainer};
use slicegs_core::raster::{render_slice, ParamGroup, RenderedSlice, Scene, SlicePlaneSpec};
use slicegs_core::{Axis, Error as CoreError};

use super::{Common, DataArgs, SplitArg};
use crate::error::{Error, Result};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RunInfo};
use crate::io::config::{apply_key, parse_config};
use crate::io::csvlog::{write_eval_csv, TrainLogWriter};
use crate::io::images::{export_stack, gray_image, rgb_image, save_png, side_by_side, slice_file_name, write_raw_f32};
use crate::io::kv;
use crate::io::palette::{read_palette, write_palette};
use crate::io::volume::{read_labels, read_volume, volume_paths, write_labels, write_volume};

pub const DEFAULT_FRACTION: f64 = 0.5;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

fn check_fraction(f: f64) -> Result<f64> {
    if f > 0.0 && f < 1.0 {
        Ok(f)
    } else {
        Err(Error::Argument(format!("--fraction must lie in (0, 1), got {f}")))
    }
}

pub fn cmd_phantom(seed: u64, dims: usize, out: &Path) -> Result<()> {
    let p = generate_phantom(seed, [dims; 3])?;
    create_dir(out)?;
    write_volume(&out.join("volume"), &p.volume, DType::F32)?;
    write_labels(&out.join("labels"), &p.labels)?;
    write_palette(&out.join("palette.txt"), &p.palette)
}

/// Slices plus whatever semantic information came with them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub stack: SliceStack,
    pub palette: Option<SemanticPalette>,
}

pub fn load_dataset(args: &DataArgs, axis: Axis) -> Result<Dataset> {
    let explicit_palette = args.palette.as_deref().map(read_palette).transpose()?;
    if let Some(dir) = &args.data {
        let (volume, _) = read_volume(&dir.join("volume"))?;
        let mut stack = extract_slices(&volume, axis);
        let palette = match explicit_palette {
            Some(p) => Some(p),
            None if dir.join("palette.txt").exists() => Some(read_palette(&dir.join("palette.txt"))?),
            None => None,
        };
        let (_, label_desc) = volume_paths(&dir.join("labels"));
        if label_desc.exists() {
            let labels = read_labels(&dir.join("labels"))?;
            let Some(palette) = &palette else {
                return Err(Error::Core(CoreError::Data(format!(
                    "{}: label volume present but no palette",
                    dir.display()
                ))));
            };
            if labels.dims != volume.dims {
                return Err(Error::Core(CoreError::Data("label and intensity volumes differ in size".into())));
            }
            stack.attach_semantics(&labels, palette)?;
        }
        return Ok(Dataset { stack, palette });
    }
    if let Some(dir) = &args.slices {
        let stack = crate::io::images::import_stack(dir, args.semantic_slices.as_deref(), axis)?;
        return Ok(Dataset { stack, palette: explicit_palette });
    }
    Err(Error::Argument("a dataset is required: pass --data DIR or --slices DIR".into()))
}

fn train_config(file: Option<&Path>, iterations: Option<usize>, set: &[String], common: &Common) -> Result<TrainConfig> {
    let mut cfg = match file {
        Some(path) => parse_config(&kv::parse(&fs::read_to_string(path).map_err(Error::io(path))?)?)?,
        None => TrainConfig::default(),
    };
    for entry in set {
        let Some((k, v)) = entry.split_once('=') else {
            return Err(Error::Argument(format!("--set expects KEY=VALUE, got `{entry}`")));
        };
        let applied = apply_key(&mut cfg, k.trim(), v.trim()).map_err(|e| Error::Argument(e.to_string()))?;
        if !applied {
            return Err(Error::Argument(format!("unknown configuration key `{}`", k.trim())));
        }
    }
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = common.deterministic {
        cfg.deterministic = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub iterations: usize,
    pub gaussians: usize,
    pub final_loss: Option<f64>,
    pub heldout: Option<MetricReport>,
    pub checkpoint: PathBuf,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} iterations, {} Gaussians", self.iterations, self.gaussians)?;
        if let Some(l) = self.final_loss {
            write!(f, ", final loss {l:.5}")?;
        }
        if let Some(r) = &self.heldout {
            write!(f, ", held-out psnr {:.3} dB ssim {:.4}", r.psnr.mean, r.ssim.mean)?;
            if let Some(a) = &r.label_accuracy {
                write!(f, " label accuracy {:.4}", a.mean)?;
            }
        }
        write!(f, "; checkpoint {}", self.checkpoint.display())
    }
}

fn slice_spec(stack: &SliceStack, depth: f64, k_sigma: f64) -> SlicePlaneSpec {
    SlicePlaneSpec::new(stack.axis, depth, stack.width, stack.height).with_k_sigma(k_sigma)
}

fn write_heldout_renders(dir: &Path, scene: &Scene, stack: &SliceStack, cfg: &TrainConfig) -> Result<()> {
    create_dir(dir)?;
    for s in stack.test() {
        let r = render_slice(scene, &slice_spec(stack, s.depth, cfg.k_sigma), &cfg.raster_options())?;
        let gray = r.grayscale();
        let sem = match &s.semantic {
            Some(t) if r.semantic_dim == 3 => Some((t.as_slice(), r.semantic.as_slice())),
            _ => None,
        };
        let img = side_by_side(stack.width, stack.height, &s.intensity, &gray, sem);
        save_png(&dir.join(slice_file_name(s.index, stack.len())), &img)?;
    }
    Ok(())
}

/// Train on the training split and write `checkpoint.bin`, `metrics.csv`,
/// `eval.csv` and `renders/` under `common.out`. A non-finite loss leaves
/// the last good state in `failure.bin`.
pub fn cmd_train(
    data: &DataArgs,
    config: Option<&Path>,
    iterations: Option<usize>,
    set: &[String],
    renders: bool,
    common: &Common,
) -> Result<TrainSummary> {
    let fraction = check_fraction(common.fraction.unwrap_or(DEFAULT_FRACTION))?;
    let cfg = train_config(config, iterations, set, common)?;
    let axis = common.axis.unwrap_or(Axis::Z);
    let Dataset { mut stack, palette } = load_dataset(data, axis)?;
    make_split(&mut stack, fraction)?;
    let out = &common.out;
    create_dir(out)?;
    let run = RunInfo::for_stack(&stack, fraction);

    let mut trainer = Trainer::new(&stack, cfg, palette.as_ref())?;
    let mut log = TrainLogWriter::create(&out.join("metrics.csv"))?;
    let mut write_err = None;
    let mut last = None;
    let mut heldout = None;
    let result = trainer.run(|rec, eval| {
        last = Some(rec.loss.total);
        if let Some(e) = eval {
            heldout = Some(e.report.clone());
        }
        if write_err.is_none() {
            write_err = log.record(rec, eval).err();
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    log.finish()?;
    if let Err(e) = result {
        if matches!(e, CoreError::NonFiniteLoss { .. }) {
            save_checkpoint(&out.join("failure.bin"), &Checkpoint { state: trainer.into_state(), run })?;
        }
        return Err(e.into());
    }

    let state = trainer.into_state();
    if heldout.is_none() && stack.test().next().is_some() {
        let cfg = &state.config;
        heldout = Some(evaluate(&state.scene, &stack, Split::Test, &cfg.raster_options(), cfg.k_sigma, palette.as_ref())?);
    }
    if let Some(r) = &heldout {
        write_eval_csv(&out.join("eval.csv"), r)?;
    }
    if renders {
        write_heldout_renders(&out.join("renders"), &state.scene, &stack, &state.config)?;
    }
    let summary = TrainSummary {
        iterations: state.iteration,
        gaussians: state.scene.gaussians.len(),
        final_loss: last,
        heldout,
        checkpoint: out.join("checkpoint.bin"),
    };
    save_checkpoint(&summary.checkpoint, &Checkpoint { state, run })?;
    Ok(summary)
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Argument(format!("--indices expects A..B, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a >= b {
        return Err(bad());
    }
    Ok((a, b))
}

fn write_render(out: &Path, stem: &str, r: &RenderedSlice, raw: bool) -> Result<()> {
    let (w, h) = (r.width(), r.height());
    let gray = r.grayscale();
    save_png(&out.join(format!("{stem}_intensity.png")), &gray_image(&gray, w, h))?;
    if r.semantic_dim == 3 {
        save_png(&out.join(format!("{stem}_semantic.png")), &rgb_image(&r.semantic, w, h))?;
    }
    if raw {
        write_raw_f32(&out.join(format!("{stem}_intensity.f32")), &gray)?;
        write_raw_f32(&out.join(format!("{stem}_semantic.f32")), &r.semantic)?;
    }
    Ok(())
}

/// Render slices at the given depths, or at the centers of slices
/// `A..B` out of `count`. Returns the number of slices written.
pub fn cmd_render(
    checkpoint: &Path,
    depths: &[f64],
    indices: Option<&str>,
    count: Option<usize>,
    size: Option<(usize, usize)>,
    raw: bool,
    common: &Common,
) -> Result<usize> {
    if let Some(t) = depths.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Argument(format!("--t must lie in [0, 1], got {t}")));
    }
    let range = indices.map(parse_range).transpose()?;
    let ckpt = load_checkpoint(checkpoint)?;
    let axis = common.axis.unwrap_or(ckpt.run.axis);
    let (width, height) = size
        .or_else(|| ckpt.run.slice_size(axis))
        .ok_or_else(|| Error::Argument("no image size stored in the checkpoint; pass --width and --height".into()))?;
    let mut jobs: Vec<(String, f64)> = depths.iter().map(|t| (format!("t{t:.6}"), *t)).collect();
    if let Some((a, b)) = range {
        let n = count
            .or(ckpt.run.dims.map(|d| d[axis.normal()]))
            .ok_or_else(|| Error::Argument("pass --count with --indices".into()))?;
        if b > n {
            return Err(Error::Argument(format!("--indices {a}..{b} exceeds the slice count {n}")));
        }
        jobs.extend((a..b).map(|i| (slice_file_name(i, n).trim_end_matches(".png").to_string(), (i as f64 + 0.5) / n as f64)));
    }

    create_dir(&common.out)?;
    let cfg = &ckpt.state.config;
    let opts = slicegs_core::raster::RasterOptions {
        deterministic: common.deterministic.unwrap_or(cfg.deterministic),
        ..cfg.raster_options()
    };
    for (stem, t) in &jobs {
        let spec = SlicePlaneSpec::new(axis, *t, width, height).with_k_sigma(cfg.k_sigma);
        let r = render_slice(&ckpt.state.scene, &spec, &opts)?;
        write_render(&common.out, stem, &r, raw)?;
    }
    Ok(jobs.len())
}

fn check_compatible(ckpt: &Checkpoint, stack: &SliceStack) -> Result<()> {
    let k = ckpt.state.scene.semantic_dim();
    if stack.has_semantics() && k != 3 {
        return Err(Error::Core(CoreError::Validation(format!(
            "checkpoint renders {k} semantic channels but the dataset carries RGB semantic maps"
        ))));
    }
    if let Some((w, h)) = ckpt.run.slice_size(stack.axis) {
        if (w, h) != (stack.width, stack.height) {
            return Err(Error::Core(CoreError::Validation(format!(
                "checkpoint was trained on {w}×{h} slices, dataset has {}×{}",
                stack.width, stack.height
            ))));
        }
    }
    Ok(())
}

/// Score a checkpoint on a dataset split and write `eval.csv`.
pub fn cmd_eval(checkpoint: &Path, data: &DataArgs, split: SplitArg, common: &Common) -> Result<MetricReport> {
    if let Some(f) = common.fraction {
        check_fraction(f)?;
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let axis = common.axis.unwrap_or(ckpt.run.axis);
    let Dataset { mut stack, palette } = load_dataset(data, axis)?;
    check_compatible(&ckpt, &stack)?;
    let which = match split {
        SplitArg::All => {
            stack.slices.iter_mut().for_each(|s: &mut Slice| s.split = Split::Test);
            Split::Test
        }
        SplitArg::Train | SplitArg::Test => {
            make_split(&mut stack, common.fraction.unwrap_or(ckpt.run.fraction))?;
            if split == SplitArg::Train { Split::Train } else { Split::Test }
        }
    };
    let cfg = &ckpt.state.config;
    let opts = slicegs_core::raster::RasterOptions {
        deterministic: common.deterministic.unwrap_or(cfg.deterministic),
        ..cfg.raster_options()
    };
    let report = evaluate(&ckpt.state.scene, &stack, which, &opts, cfg.k_sigma, palette.as_ref())?;
    create_dir(&common.out)?;
    write_eval_csv(&common.out.join("eval.csv"), &report)?;
    Ok(report)
}

/// Gradient check on the standard fixture. `corrupt` scales one analytic
/// log-scale gradient so the harness can be seen to fail.
pub fn cmd_gradcheck(seed: u64, h: f64, corrupt: bool) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Argument(format!("--h must be positive, got {h}")));
    }
    let scene = gradcheck_scene(seed)?;
    Ok(grad_check_with(&scene, &gradcheck_spec(), h, |g| {
        if corrupt {
            let v = &mut g.group_mut(ParamGroup::Scale)[0];
            *v = *v * 1.01 + 1e-3;
        }
    })?)
}

/// Without a checkpoint: write the dataset as PNG stacks. With one: render
/// every slice along the axis and write the result as PNG stacks plus a
/// raw `f32` volume.
pub fn cmd_export(data: &DataArgs, checkpoint: Option<&Path>, common: &Common) -> Result<()> {
    let out = &common.out;
    let stack = match checkpoint {
        None => {
            let axis = common.axis.unwrap_or(Axis::Z);
            load_dataset(data, axis)?.stack
        }
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let axis = common.axis.unwrap_or(ckpt.run.axis);
            let dims = ckpt.run.dims.ok_or_else(|| Error::Argument("checkpoint stores no volume size".into()))?;
            let (ua, va) = axis.plane();
            let (w, h, n) = (dims[ua], dims[va], dims[axis.normal()]);
            let cfg = &ckpt.state.config;
            let opts = slicegs_core::raster::RasterOptions {
                deterministic: common.deterministic.unwrap_or(cfg.deterministic),
                ..cfg.raster_options()
            };
            let mut slices = Vec::with_capacity(n);
            for i in 0..n {
                let depth = (i as f64 + 0.5) / n as f64;
                let r = render_slice(&ckpt.state.scene, &SlicePlaneSpec::new(axis, depth, w, h).with_k_sigma(cfg.k_sigma), &opts)?;
                let semantic = (r.semantic_dim == 3).then(|| r.semantic.clone());
                slices.push(Slice { index: i, depth, intensity: r.grayscale(), semantic, split: Split::Train });
            }
            let stack = SliceStack { axis, width: w, height: h, slices };
            create_dir(out)?;
            write_volume(&out.join("render"), &restack(&stack)?, DType::F32)?;
            stack
        }
    };
    let sem = out.join("semantic");
    export_stack(&stack, &out.join("intensity"), stack.has_semantics().then_some(sem.as_path()))?;
    if checkpoint.is_none() {
        if let Some(dir) = &data.data {
            if dir.join("palette.txt").exists() && data.palette.is_none() {
                fs::copy(dir.join("palette.txt"), out.join("palette.txt")).map_err(Error::io(out.join("palette.txt")))?;
            }
        }
        if let Some(p) = &data.palette {
            write_palette(&out.join("palette.txt"), &read_palette(p)?)?;
        }
    }
    Ok(())
}
