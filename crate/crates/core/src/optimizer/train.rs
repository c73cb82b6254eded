use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::housekeeping::{densify, prune, DensifyStats};
use super::init::initialize_scene;
use super::loss::{loss_and_gradients, LossReport};
use crate::dataset::{label_accuracy, SemanticPalette, SliceStack, Split};
use crate::metrics::{psnr, semantic_mse, ssim, ImageRef, MetricReport, SliceMetrics};
use crate::raster::{backward_slice, render_slice, RasterOptions, Scene, SlicePlaneSpec};
use crate::{Error, Result};

/// Everything needed to resume or reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub scene: Scene,
    pub adam: AdamState,
    pub stats: DensifyStats,
    /// Completed iterations.
    pub iteration: usize,
}

impl TrainState {
    pub fn new(config: TrainConfig, scene: Scene) -> Self {
        let adam = AdamState::new(&scene);
        let stats = DensifyStats::new(scene.gaussians.len());
        TrainState { config, scene, adam, stats, iteration: 0 }
    }

    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        self.scene.check_shapes()?;
        if !self.adam.matches(&self.scene) || self.stats.len() != self.scene.gaussians.len() {
            return Err(Error::Shape("optimizer state does not match the scene".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    pub slice: usize,
    pub loss: LossReport,
    /// Gaussian count after this iteration's housekeeping.
    pub gaussians: usize,
    pub skipped_groups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub iterations: Vec<IterationRecord>,
    pub evals: Vec<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: TrainLog,
}

fn slice_spec(stack: &SliceStack, depth: f64, k_sigma: f64) -> SlicePlaneSpec {
    SlicePlaneSpec::new(stack.axis, depth, stack.width, stack.height).with_k_sigma(k_sigma)
}

/// Render every slice of `split` and score it against the ground truth.
/// Intensity metrics use the mean of the three rendered channels.
pub fn evaluate(
    scene: &Scene,
    stack: &SliceStack,
    split: Split,
    opts: &RasterOptions,
    k_sigma: f64,
    palette: Option<&SemanticPalette>,
) -> Result<MetricReport> {
    let (w, h) = (stack.width, stack.height);
    let mut out = Vec::new();
    for s in stack.slices.iter().filter(|s| s.split == split) {
        let r = render_slice(scene, &slice_spec(stack, s.depth, k_sigma), opts)?;
        let gray = r.grayscale();
        let a = ImageRef::new(&gray, w, h, 1)?;
        let b = ImageRef::new(&s.intensity, w, h, 1)?;
        let (sem_mse, acc) = match &s.semantic {
            Some(target) if r.semantic_dim == 3 => {
                let mse = semantic_mse(&ImageRef::new(&r.semantic, w, h, 3)?, &ImageRef::new(target, w, h, 3)?)?;
                let acc = palette.map(|p| label_accuracy(&r.semantic, target, p)).transpose()?;
                (Some(mse), acc)
            }
            _ => (None, None),
        };
        out.push(SliceMetrics {
            index: s.index,
            depth: s.depth,
            psnr: psnr(&a, &b, 1.0)?,
            ssim: ssim(&a, &b)?,
            semantic_mse: sem_mse,
            label_accuracy: acc,
        });
    }
    Ok(MetricReport::from_slices(out))
}

/// Stateful training driver over one slice stack.
pub struct Trainer<'a> {
    stack: &'a SliceStack,
    palette: Option<&'a SemanticPalette>,
    train: Vec<usize>,
    order: Vec<usize>,
    order_epoch: Option<usize>,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    /// Fresh run: the scene is initialized from the training slices.
    pub fn new(stack: &'a SliceStack, config: TrainConfig, palette: Option<&'a SemanticPalette>) -> Result<Self> {
        config.validate()?;
        let scene = initialize_scene(stack, &config)?;
        Self::resume(stack, TrainState::new(config, scene), palette)
    }

    pub fn resume(stack: &'a SliceStack, state: TrainState, palette: Option<&'a SemanticPalette>) -> Result<Self> {
        state.check()?;
        let train: Vec<usize> = (0..stack.len()).filter(|i| stack.slices[*i].split == Split::Train).collect();
        if train.is_empty() {
            return Err(Error::Data("no training slices".into()));
        }
        Ok(Trainer { stack, palette, train, order: Vec::new(), order_epoch: None, state })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.state.config.iterations
    }

    /// Training slice used by the 0-based iteration `it`: a seeded
    /// permutation of the training slices per epoch.
    fn slice_for(&mut self, it: usize) -> usize {
        let n = self.train.len();
        let epoch = it / n;
        if self.order_epoch != Some(epoch) {
            let seed = self.state.config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.order.clone_from(&self.train);
            self.order.shuffle(&mut rng);
            self.order_epoch = Some(epoch);
        }
        self.order[it % n]
    }

    /// One iteration. On error the state is left as it was before the call.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let it = self.state.iteration;
        let idx = self.slice_for(it);
        let cfg = &self.state.config;
        let opts = cfg.raster_options();
        let target = &self.stack.slices[idx];
        let spec = slice_spec(self.stack, target.depth, cfg.k_sigma);
        let fwd = render_slice(&self.state.scene, &spec, &opts)?;
        let (loss, upstream) = loss_and_gradients(&fwd, target, cfg.ssim_weight, cfg.semantic_weight)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it + 1,
                detail: format!(
                    "slice {idx}: l1 {} ssim_term {} semantic_mse {} with {} Gaussians (parameters finite: {})",
                    loss.l1,
                    loss.ssim_term,
                    loss.semantic_mse,
                    self.state.scene.gaussians.len(),
                    self.state.scene.is_finite()
                ),
            });
        }
        let grads = backward_slice(&self.state.scene, &spec, &opts, &fwd, &upstream)?;

        let st = &mut self.state;
        st.stats.record(&grads);
        let skipped = st.adam.apply(&mut st.scene, &grads, &st.config.lr).len();
        st.iteration += 1;
        let done = st.iteration;
        let cfg = &st.config;
        if cfg.densify_interval > 0 && done % cfg.densify_interval == 0 && done <= cfg.densify_until && done < cfg.iterations {
            densify(&mut st.scene, Some(&mut st.adam), &mut st.stats, cfg.densify_grad_threshold, cfg.max_gaussians)?;
        }
        if cfg.prune_interval > 0 && done % cfg.prune_interval == 0 && done < cfg.iterations {
            if prune(&mut st.scene, Some(&mut st.adam), cfg.prune_alpha_threshold)? > 0 {
                st.stats.reset(st.scene.gaussians.len());
            }
        }
        Ok(IterationRecord { iteration: done, slice: idx, loss, gaussians: st.scene.gaussians.len(), skipped_groups: skipped })
    }

    pub fn evaluate(&self) -> Result<MetricReport> {
        let cfg = &self.state.config;
        evaluate(&self.state.scene, self.stack, Split::Test, &cfg.raster_options(), cfg.k_sigma, self.palette)
    }

    /// Run to completion, evaluating on held-out slices every
    /// `eval_interval` iterations and at the end. `observer` sees every
    /// iteration and the evaluation made after it, if any.
    pub fn run(&mut self, mut observer: impl FnMut(&IterationRecord, Option<&EvalRecord>)) -> Result<TrainLog> {
        let mut log = TrainLog::default();
        let has_test = self.stack.test().next().is_some();
        while !self.is_done() {
            let rec = self.step()?;
            let interval = self.state.config.eval_interval;
            let due = (interval > 0 && rec.iteration % interval == 0) || self.is_done();
            let eval = if has_test && due {
                Some(EvalRecord { iteration: rec.iteration, report: self.evaluate()? })
            } else {
                None
            };
            observer(&rec, eval.as_ref());
            log.iterations.push(rec);
            log.evals.extend(eval);
        }
        Ok(log)
    }
}

/// Initialize and train a scene on `stack` for `config.iterations` steps.
pub fn train(stack: &SliceStack, config: &TrainConfig, palette: Option<&SemanticPalette>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(stack, config.clone(), palette)?;
    let log = trainer.run(|_, _| {})?;
    Ok(TrainOutcome { state: trainer.into_state(), log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{extract_slices, generate_phantom, make_split};
    use crate::Axis;

    fn small_stack() -> (SliceStack, SemanticPalette) {
        let p = generate_phantom(2, [32, 32, 32]).unwrap();
        let mut s = extract_slices(&p.volume, Axis::Z);
        s.attach_semantics(&p.labels, &p.palette).unwrap();
        make_split(&mut s, 0.5).unwrap();
        (s, p.palette)
    }

    fn small_config(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            n_init: 1500,
            triplane_resolution: 8,
            triplane_channels: 4,
            decoder_hidden: 16,
            eval_interval: 20,
            densify_interval: 15,
            densify_until: 30,
            prune_interval: 25,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_iterations_keeps_initialization() {
        let (s, pal) = small_stack();
        let cfg = small_config(0);
        let out = train(&s, &cfg, Some(&pal)).unwrap();
        assert_eq!(out.state.scene, initialize_scene(&s, &cfg).unwrap());
        assert_eq!(out.state.iteration, 0);
        assert!(out.log.iterations.is_empty());
    }

    /// Mean loss over every training slice; per-iteration losses depend on
    /// which slice was drawn.
    fn train_set_loss(scene: &Scene, s: &SliceStack, cfg: &TrainConfig) -> f64 {
        let losses: Vec<f64> = s
            .train()
            .map(|t| {
                let r = render_slice(scene, &slice_spec(s, t.depth, cfg.k_sigma), &cfg.raster_options()).unwrap();
                crate::optimizer::compute_loss(&r, t, cfg.ssim_weight, cfg.semantic_weight).unwrap().total
            })
            .collect();
        losses.iter().sum::<f64>() / losses.len() as f64
    }

    #[test]
    fn short_run_is_finite_deterministic_and_learns() {
        let (s, pal) = small_stack();
        let cfg = small_config(40);
        let a = train(&s, &cfg, Some(&pal)).unwrap();
        let b = train(&s, &cfg, Some(&pal)).unwrap();
        assert_eq!(a, b);
        assert!(a.log.iterations.iter().all(|r| r.loss.is_finite()));
        assert_eq!(a.log.evals.iter().map(|e| e.iteration).collect::<Vec<_>>(), [20, 40]);
        assert!(a.state.check().is_ok());
        let before = train_set_loss(&initialize_scene(&s, &cfg).unwrap(), &s, &cfg);
        let after = train_set_loss(&a.state.scene, &s, &cfg);
        assert!(after < 0.9 * before, "{before} → {after}");
        let rep = &a.log.evals[1].report;
        assert_eq!(rep.slices.len(), 16);
        assert!(rep.label_accuracy.is_some());
    }

    #[test]
    fn epochs_visit_every_training_slice() {
        let (s, pal) = small_stack();
        let mut t = Trainer::new(&s, small_config(100), Some(&pal)).unwrap();
        let mut seen: Vec<usize> = (0..16).map(|i| t.slice_for(i)).collect();
        seen.sort_unstable();
        let train: Vec<usize> = s.train().map(|x| x.index).collect();
        assert_eq!(seen, train);
        let second: Vec<usize> = (16..32).map(|i| t.slice_for(i)).collect();
        let first: Vec<usize> = (0..16).map(|i| t.slice_for(i)).collect();
        assert_ne!(first, second);
    }

    #[test]
    fn resumed_run_matches_uninterrupted() {
        let (s, pal) = small_stack();
        let cfg = small_config(30);
        let full = train(&s, &cfg, Some(&pal)).unwrap();
        let mut t = Trainer::new(&s, cfg, Some(&pal)).unwrap();
        for _ in 0..12 {
            t.step().unwrap();
        }
        let mid = t.into_state();
        let mut t = Trainer::resume(&s, mid, Some(&pal)).unwrap();
        t.run(|_, _| {}).unwrap();
        assert_eq!(t.state(), &full.state);
    }

    #[test]
    fn non_finite_loss_aborts_without_update() {
        let (mut s, pal) = small_stack();
        let idx: Vec<usize> = s.train().map(|x| x.index).collect();
        for i in idx {
            s.slices[i].intensity[5] = f64::NAN;
        }
        let mut t = Trainer::new(&s, small_config(5), Some(&pal)).unwrap();
        let before = t.state().clone();
        let err = t.step().unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { iteration: 1, .. }));
        assert_eq!(t.state(), &before);
    }

    #[test]
    fn requires_training_slices() {
        let (mut s, pal) = small_stack();
        s.slices.iter_mut().for_each(|x| x.split = Split::Test);
        assert!(Trainer::new(&s, small_config(1), Some(&pal)).is_err());
    }
}
