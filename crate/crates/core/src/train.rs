//! Two-phase training.
//!
//! Phase 1 fits encoder, attention and decoder to the composite saliency
//! loss with the scanpath head untouched. Phase 2 fits the scanpath head to
//! the scanpath loss, by default on a frozen encoder/attention/decoder whose
//! attended features are computed once per image. An alternating schedule
//! runs one epoch of each phase in turn.
//!
//! Within a mini-batch each sample gets its own graph; per-sample losses and
//! gradients are computed in parallel, then reduced sequentially in sample
//! order so results do not depend on thread scheduling.

use std::time::Instant;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{resample_map, Dataset};
use crate::error::{Error, Result};
use crate::losses::{fixations_above_percentile, saliency_loss_var, scanpath_loss_var, LossWeights, ScanpathDivisor};
use crate::model::{soft_argmax_var, Branch, SaliencyMap, SalyPath, Scanpath};
use crate::params::ParamStore;
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Phase 1 to completion, then phase 2.
    Sequential,
    /// One phase-1 epoch, then one phase-2 epoch, repeated.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub phase1_lr: f64,
    pub phase2_lr: f64,
    pub lr_decay: f64,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub freeze_encoder_phase2: bool,
    pub schedule: Schedule,
    pub loss_weights: LossWeights,
    pub scanpath_divisor: ScanpathDivisor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::paper()
    }
}

impl TrainConfig {
    /// Learning rates 1e-7 / 1e-5 with a ×0.9 per-epoch decay.
    pub fn paper() -> Self {
        TrainConfig {
            phase1_lr: 1e-7,
            phase2_lr: 1e-5,
            lr_decay: 0.9,
            phase1_epochs: 20,
            phase2_epochs: 20,
            batch_size: 8,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            freeze_encoder_phase2: true,
            schedule: Schedule::Sequential,
            loss_weights: LossWeights::default(),
            scanpath_divisor: ScanpathDivisor::Points,
        }
    }

    /// Scaled-up learning rates for the small desk model.
    pub fn desk() -> Self {
        TrainConfig { phase1_lr: 1e-4, phase2_lr: 1e-3, ..TrainConfig::paper() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" | "vgg16" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected desk or paper)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("phase1_lr", self.phase1_lr), ("phase2_lr", self.phase2_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {lr}")));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.loss_weights.validate()
    }
}

/// `base_lr · decay^epoch`.
pub fn lr_schedule(epoch: usize, base_lr: f64, decay: f64) -> f64 {
    base_lr * decay.powi(epoch as i32)
}

pub type Grads = IndexMap<String, Tensor>;

fn check_grads(grads: &Grads) -> Result<()> {
    match grads.iter().find(|(_, g)| !g.is_finite()) {
        Some((name, _)) => Err(Error::Numeric(format!("non-finite gradient for tensor `{name}`"))),
        None => Ok(()),
    }
}

/// `w ← w − lr·g` for every tensor in `grads`.
pub fn sgd_step(params: &mut ParamStore, grads: &Grads, lr: f64) -> Result<()> {
    check_grads(grads)?;
    for (name, g) in grads {
        let w = params.get_mut(name)?;
        for (w, g) in w.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * g;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: IndexMap<String, Vec<f64>>,
    v: IndexMap<String, Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: IndexMap::new(), v: IndexMap::new() }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut ParamStore, grads: &Grads, state: &mut AdamState, lr: f64) -> Result<()> {
    check_grads(grads)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (name, g) in grads {
        let w = params.get_mut(name)?;
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
        for (((w, g), m), v) in w.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam(AdamState),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam(AdamState::default()),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd => sgd_step(params, grads, lr),
            Optimizer::Adam(state) => adam_step(params, grads, state, lr),
        }
    }
}

/// Per-epoch record of one phase.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub phase: String,
    /// Mean training loss over each epoch's samples.
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    /// Samples whose prediction was too flat for the NSS term (phase 1).
    pub nss_degenerate: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub config: TrainConfig,
    pub phase1: TrainReport,
    pub phase2: TrainReport,
    pub wall_time_secs: f64,
}

/// Samples without recorded scanpaths take the saliency loss's NSS term at
/// the ground-truth pixels at or above this percentile.
pub const FALLBACK_FIXATION_PERCENTILE: f64 = 90.0;

/// A sample brought to the model's input resolution.
struct Prepared {
    image: Tensor,
    map: SaliencyMap,
    fixations: Vec<(usize, usize)>,
    scanpaths: Vec<Scanpath>,
}

/// Truncates or pads (repeating the final point) to exactly `n` points.
pub fn fit_length(path: &Scanpath, n: usize) -> Result<Scanpath> {
    let pts = path.points();
    let last = *pts.last().ok_or_else(|| Error::Contract("empty ground-truth scanpath".into()))?;
    Scanpath::new((0..n).map(|i| pts.get(i).copied().unwrap_or(last)).collect())
}

fn prepare(model: &SalyPath, dataset: &Dataset) -> Result<Vec<Prepared>> {
    if dataset.samples.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".into()));
    }
    let (h, w) = model.config().input_size;
    let n = model.config().scanpath_length();
    dataset
        .samples
        .iter()
        .map(|s| {
            let image = s.stimulus.resample(w, h)?.to_tensor();
            let map = resample_map(&s.map, w, h)?;
            let scanpaths: Vec<Scanpath> = s.scanpaths()?.iter().map(|p| fit_length(p, n)).collect::<Result<_>>()?;
            let fixations = if scanpaths.is_empty() {
                fixations_above_percentile(&map, FALLBACK_FIXATION_PERCENTILE)
            } else {
                scanpaths.iter().flat_map(|p| p.pixel_cells(w, h)).collect()
            };
            Ok(Prepared { image, map, fixations, scanpaths })
        })
        .collect()
}

struct SampleResult {
    loss: f64,
    grads: Grads,
    degenerate: bool,
}

fn phase1_sample(model: &SalyPath, s: &Prepared, weights: &LossWeights) -> Result<SampleResult> {
    let g = Graph::new();
    let p = model.params().bind_where(&g, |n| Branch::of(n) != Some(Branch::ScanpathHead), |_| true);
    let x = model.encode_var(&p, g.constant(s.image.clone()))?;
    let x = model.attend_var(&p, x)?;
    let y = model.decode_var(&p, x)?;
    let l = saliency_loss_var(y, &s.map, &s.fixations, weights)?;
    let loss = l.total.value().item()?;
    if !loss.is_finite() {
        return Ok(SampleResult { loss, grads: Grads::new(), degenerate: l.nss_degenerate });
    }
    l.total.backward()?;
    Ok(SampleResult { loss, grads: p.grads(), degenerate: l.nss_degenerate })
}

/// Mean scanpath loss over all observers of one image. `attended` is the
/// cached `X'` when the trunk is frozen.
fn phase2_sample(model: &SalyPath, s: &Prepared, attended: Option<&Tensor>, divisor: ScanpathDivisor) -> Result<SampleResult> {
    if s.scanpaths.is_empty() {
        return Err(Error::Contract("scanpath training needs ground-truth scanpaths for every image".into()));
    }
    let g = Graph::new();
    let (p, x) = match attended {
        Some(x) => {
            let p = model.params().bind_where(&g, |n| Branch::of(n) == Some(Branch::ScanpathHead), |_| true);
            (p, g.constant(x.clone()))
        }
        None => {
            let p = model.params().bind_where(&g, |n| Branch::of(n) != Some(Branch::Decoder), |_| true);
            let x = model.encode_var(&p, g.constant(s.image.clone()))?;
            let x = model.attend_var(&p, x)?;
            (p, x)
        }
    };
    let coords = soft_argmax_var(model.scanpath_head_var(&p, x)?, model.config().beta)?;
    let mut total = scanpath_loss_var(coords, &s.scanpaths[0], divisor)?;
    for gt in &s.scanpaths[1..] {
        total = total.add(scanpath_loss_var(coords, gt, divisor)?)?;
    }
    let total = total.scale(1.0 / s.scanpaths.len() as f64);
    let loss = total.value().item()?;
    if !loss.is_finite() {
        return Ok(SampleResult { loss, grads: Grads::new(), degenerate: false });
    }
    total.backward()?;
    Ok(SampleResult { loss, grads: p.grads(), degenerate: false })
}

fn accumulate(results: &[SampleResult]) -> Grads {
    let mut sum = Grads::new();
    for r in results {
        for (name, g) in &r.grads {
            match sum.get_mut(name) {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => {
                    sum.insert(name.clone(), g.clone());
                }
            }
        }
    }
    let scale = 1.0 / results.len() as f64;
    for g in sum.values_mut() {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    sum
}

/// Runs one epoch: shuffled mini-batches, per-sample results in parallel,
/// ordered reduction, one optimizer step per batch. Returns the mean loss
/// and the number of degenerate NSS samples.
fn run_epoch(
    model: &mut SalyPath,
    optimizer: &mut Optimizer,
    order: &[usize],
    batch_size: usize,
    lr: f64,
    epoch: usize,
    per_sample: &(dyn Fn(&SalyPath, usize) -> Result<SampleResult> + Sync),
) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut degenerate = 0;
    for batch in order.chunks(batch_size) {
        let results: Vec<SampleResult> = {
            let m = &*model;
            batch.par_iter().map(|&i| per_sample(m, i)).collect::<Result<_>>()?
        };
        if let Some(r) = results.iter().find(|r| !r.loss.is_finite()) {
            return Err(Error::Diverged { epoch, msg: format!("loss became {}", r.loss) });
        }
        total += results.iter().map(|r| r.loss).sum::<f64>();
        degenerate += results.iter().filter(|r| r.degenerate).count();
        optimizer.step(model.params_mut(), &accumulate(&results), lr)?;
    }
    Ok((total / order.len() as f64, degenerate))
}

struct PhaseRunner {
    rng: ChaCha8Rng,
    optimizer: Optimizer,
    report: TrainReport,
    base_lr: f64,
}

impl PhaseRunner {
    fn new(phase: &str, config: &TrainConfig, stream: u64, base_lr: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        PhaseRunner {
            rng,
            optimizer: Optimizer::new(config.optimizer),
            report: TrainReport { phase: phase.into(), ..TrainReport::default() },
            base_lr,
        }
    }

    fn epoch(
        &mut self,
        model: &mut SalyPath,
        config: &TrainConfig,
        n: usize,
        per_sample: &(dyn Fn(&SalyPath, usize) -> Result<SampleResult> + Sync),
    ) -> Result<()> {
        let start = Instant::now();
        let epoch = self.report.losses.len();
        let lr = lr_schedule(epoch, self.base_lr, config.lr_decay);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let (loss, degenerate) = run_epoch(model, &mut self.optimizer, &order, config.batch_size, lr, epoch, per_sample)?;
        self.report.losses.push(loss);
        self.report.lrs.push(lr);
        self.report.nss_degenerate += degenerate;
        self.report.wall_time_secs += start.elapsed().as_secs_f64();
        Ok(())
    }
}

fn phase1_runner(config: &TrainConfig) -> PhaseRunner {
    PhaseRunner::new("saliency", config, 1, config.phase1_lr)
}

fn phase2_runner(config: &TrainConfig) -> PhaseRunner {
    PhaseRunner::new("scanpath", config, 2, config.phase2_lr)
}

fn phase1_epoch(runner: &mut PhaseRunner, model: &mut SalyPath, data: &[Prepared], config: &TrainConfig) -> Result<()> {
    let weights = config.loss_weights;
    runner.epoch(model, config, data.len(), &|m, i| phase1_sample(m, &data[i], &weights))
}

fn phase2_epoch(runner: &mut PhaseRunner, model: &mut SalyPath, data: &[Prepared], config: &TrainConfig) -> Result<()> {
    let divisor = config.scanpath_divisor;
    if config.freeze_encoder_phase2 {
        let cached: Vec<Tensor> = data.par_iter().map(|s| model.encode_attended(&s.image)).collect::<Result<_>>()?;
        runner.epoch(model, config, data.len(), &|m, i| phase2_sample(m, &data[i], Some(&cached[i]), divisor))
    } else {
        runner.epoch(model, config, data.len(), &|m, i| phase2_sample(m, &data[i], None, divisor))
    }
}

/// Saliency phase: encoder, attention and decoder under the composite loss.
/// On divergence the model keeps the parameters of the last finite step.
pub fn train_phase1(model: &mut SalyPath, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let data = prepare(model, dataset)?;
    let mut runner = phase1_runner(config);
    for _ in 0..config.phase1_epochs {
        phase1_epoch(&mut runner, model, &data, config)?;
    }
    Ok(runner.report)
}

/// Scanpath phase: the head (and, unless frozen, encoder and attention)
/// under the scanpath loss averaged over observers.
pub fn train_phase2(model: &mut SalyPath, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let data = prepare(model, dataset)?;
    let mut runner = phase2_runner(config);
    if config.freeze_encoder_phase2 {
        let divisor = config.scanpath_divisor;
        let cached: Vec<Tensor> = data.par_iter().map(|s| model.encode_attended(&s.image)).collect::<Result<_>>()?;
        for _ in 0..config.phase2_epochs {
            runner.epoch(model, config, data.len(), &|m, i| phase2_sample(m, &data[i], Some(&cached[i]), divisor))?;
        }
    } else {
        for _ in 0..config.phase2_epochs {
            phase2_epoch(&mut runner, model, &data, config)?;
        }
    }
    Ok(runner.report)
}

/// Both phases according to `config.schedule`.
pub fn train(model: &mut SalyPath, dataset: &Dataset, config: &TrainConfig) -> Result<TrainingRun> {
    let start = Instant::now();
    let (phase1, phase2) = match config.schedule {
        Schedule::Sequential => (train_phase1(model, dataset, config)?, train_phase2(model, dataset, config)?),
        Schedule::Alternating => {
            config.validate()?;
            let data = prepare(model, dataset)?;
            let mut p1 = phase1_runner(config);
            let mut p2 = phase2_runner(config);
            for epoch in 0..config.phase1_epochs.max(config.phase2_epochs) {
                if epoch < config.phase1_epochs {
                    phase1_epoch(&mut p1, model, &data, config)?;
                }
                if epoch < config.phase2_epochs {
                    phase2_epoch(&mut p2, model, &data, config)?;
                }
            }
            (p1.report, p2.report)
        }
    };
    Ok(TrainingRun { config: config.clone(), phase1, phase2, wall_time_secs: start.elapsed().as_secs_f64() })
}
