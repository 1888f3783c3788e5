//! Auto-decoder training: decoder weights and per-shape codewords are
//! optimized jointly with Adam.
//!
//! Each step draws fresh uniform UV samples for every (shape, patch) pair
//! from a generator keyed on `(seed, step, shape, patch)`, so a run is
//! reproducible and resumable from a checkpoint without saving RNG state.
//! Decoders are evaluated with first-order jets; the loss head is recorded
//! on a [`Tape`] whose leaves are the decoded positions and UV derivatives,
//! and its gradients are pulled back through each decoder in batch.

mod checkpoint;
mod log;
mod optimizer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use log::{TrainLog, LOG_HEADER};
pub use optimizer::{clip_global_norm, Adam, OptimizerState};

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::PointCloud;
use crate::jets::Tape;
use crate::losses::{
    build_loss, LossError, LossOptions, LossReport, LossTarget, LossWeights, PatchVars,
};
use crate::metrics::{evaluate_model, EvalConfig, MetricsError, MetricsReport};
use crate::surface::checkpoint::CheckpointError;
use crate::surface::{
    sample_uv_with, Architecture, AtlasModel, DecoderGrad, DecoderTrace, JetOrder, ModelGrad,
    SurfaceError,
};

/// Stop once the mean total loss of the last `window` steps improves on
/// the window before it by less than `rel_tol`, checked every `window`
/// steps from `min_steps` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub window: usize,
    pub min_steps: usize,
    pub rel_tol: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            window: 200,
            min_steps: 400,
            rel_tol: 1e-3,
        }
    }
}

impl Convergence {
    pub fn reached(&self, totals: &[f64]) -> bool {
        let (n, w) = (totals.len(), self.window);
        if w == 0 || n < self.min_steps.max(2 * w) || n % w != 0 {
            return false;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let prev = mean(&totals[n - 2 * w..n - w]);
        let last = mean(&totals[n - w..]);
        prev - last < self.rel_tol * prev.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub patches: usize,
    pub points_per_patch: usize,
    /// Step budget.
    pub steps: usize,
    pub arch: Architecture,
    pub adam: Adam,
    pub weights: LossWeights,
    pub loss_options: LossOptions,
    pub clip_norm: f64,
    pub seed: u64,
    /// Evaluate every this many steps; 0 evaluates only at the end.
    pub eval_interval: usize,
    pub eval: EvalConfig,
    pub convergence: Option<Convergence>,
    pub checkpoint: Option<PathBuf>,
    /// Also checkpoint every this many steps; 0 writes only at the end.
    pub checkpoint_interval: usize,
    pub log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patches: 4,
            points_per_patch: 500,
            steps: 3000,
            arch: Architecture::default(),
            adam: Adam::default(),
            weights: LossWeights::default(),
            loss_options: LossOptions::default(),
            clip_norm: 10.0,
            seed: 0,
            eval_interval: 0,
            eval: EvalConfig::default(),
            convergence: Some(Convergence::default()),
            checkpoint: None,
            checkpoint_interval: 0,
            log: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let a = &self.adam;
        let problems = [
            (self.patches == 0, "patches must be at least 1"),
            (
                self.points_per_patch == 0,
                "points per patch must be at least 1",
            ),
            (!(a.lr > 0.0), "learning rate must be positive"),
            (
                !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2),
                "betas must lie in [0, 1)",
            ),
            (!(a.eps > 0.0), "epsilon must be positive"),
            (!(self.clip_norm > 0.0), "clip norm must be positive"),
        ];
        if let Some((_, msg)) = problems.iter().find(|p| p.0) {
            return Err(TrainError::Config(msg.to_string()));
        }
        self.weights.validate()?;
        Ok(())
    }
}

/// A training shape: its cloud (normals are used for evaluation only) and
/// the indexed loss target.
#[derive(Debug, Clone)]
pub struct TrainTarget {
    pub cloud: PointCloud,
    pub loss: LossTarget,
}

impl TrainTarget {
    pub fn new(cloud: PointCloud, area: Option<f64>) -> Result<Self, TrainError> {
        let loss = LossTarget::new(cloud.points().to_vec(), area)?;
        Ok(Self { cloud, loss })
    }
}

/// State dumped when a loss term turns non-finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub step: u64,
    pub shape: usize,
    pub report: LossReport,
    /// First patch whose decoded samples or area are non-finite.
    pub patch: Option<usize>,
    pub areas: Vec<f64>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.report;
        writeln!(
            f,
            "non-finite loss at step {} (shape {})",
            self.step, self.shape
        )?;
        writeln!(
            f,
            "chd={} l_e={} l_g={} l_sk={} l_str={} l_def={} l_ol={} total={}",
            r.chd, r.l_e, r.l_g, r.l_sk, r.l_str, r.l_def, r.l_ol, r.total
        )?;
        match self.patch {
            Some(k) => writeln!(f, "offending patch: {k}")?,
            None => writeln!(f, "offending patch: none identified")?,
        }
        write!(f, "patch areas: {:?}", self.areas)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    NonFinite(Box<Diagnostic>),
}

/// Generator for the UV samples of one patch of one shape at one step.
pub fn step_rng(seed: u64, step: u64, shape: usize, patch: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key
        .chunks_exact_mut(8)
        .zip([seed, step, shape as u64, patch as u64])
    {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Loss, per-shape patch areas and full parameter gradient at `step`.
#[derive(Debug, Clone)]
pub struct LossGrad {
    /// Summed over shapes.
    pub report: LossReport,
    pub areas: Vec<Vec<f64>>,
    pub grad: ModelGrad,
}

struct ShapeGrad {
    report: LossReport,
    areas: Vec<f64>,
    patches: Vec<(DecoderGrad, Vec<f64>)>,
}

fn finite_patch(trace: &DecoderTrace) -> bool {
    trace
        .output()
        .slots
        .iter()
        .all(|a| a.iter().all(|v| v.is_finite()))
}

fn shape_grad(
    model: &AtlasModel,
    shape: usize,
    target: &LossTarget,
    step: u64,
    cfg: &TrainConfig,
) -> Result<ShapeGrad, TrainError> {
    let code = model.codeword(shape);
    let m = cfg.points_per_patch;
    let traces = model
        .decoders()
        .par_iter()
        .enumerate()
        .map(|(k, dec)| {
            let uvs = sample_uv_with(&mut step_rng(cfg.seed, step, shape, k), m);
            dec.forward_batch(code, &uvs, JetOrder::First)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut tape = Tape::with_capacity(traces.len() * m * 64 + target.points().len() * 8);
    let vars: Vec<PatchVars> = traces
        .iter()
        .map(|t| {
            let n = t.len();
            let du: Vec<_> = (0..n).map(|i| t.d_du(i)).collect();
            let dv: Vec<_> = (0..n).map(|i| t.d_dv(i)).collect();
            PatchVars::register(&mut tape, &t.positions(), &du, &dv)
        })
        .collect();
    let non_finite = |report: LossReport, areas: Vec<f64>| {
        let patch = traces
            .iter()
            .zip(&areas)
            .position(|(t, a)| !finite_patch(t) || !a.is_finite());
        let patch = patch.or_else(|| traces.iter().position(|t| !finite_patch(t)));
        TrainError::NonFinite(Box::new(Diagnostic {
            step,
            shape,
            report,
            patch,
            areas,
        }))
    };
    if traces.iter().any(|t| !finite_patch(t)) {
        return Err(non_finite(LossReport::default(), Vec::new()));
    }
    let loss = build_loss(&mut tape, &vars, target, &cfg.weights, cfg.loss_options)?;
    if !loss.report.is_finite() {
        return Err(non_finite(loss.report, loss.areas));
    }
    let grads = tape
        .backward(loss.total)
        .expect("loss recorded on this tape");

    let patches = traces
        .par_iter()
        .zip(vars.par_iter())
        .zip(model.decoders().par_iter())
        .map(|((trace, v), dec)| {
            let pull = |xs: &[[crate::jets::Var; 3]]| {
                Array2::from_shape_fn((xs.len(), 3), |(i, c)| grads.wrt(xs[i][c]))
            };
            let g = [pull(&v.points), pull(&v.du), pull(&v.dv)];
            dec.backward(code, trace, [&g[0], &g[1], &g[2]])
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShapeGrad {
        report: loss.report,
        areas: loss.areas,
        patches,
    })
}

/// Evaluates the objective and its gradient for every target at `step`.
/// The reduction over shapes and patches runs in a fixed order.
pub fn loss_and_grad(
    model: &AtlasModel,
    targets: &[LossTarget],
    step: u64,
    cfg: &TrainConfig,
) -> Result<LossGrad, TrainError> {
    if targets.is_empty() {
        return Err(TrainError::Config("training batch is empty".into()));
    }
    if targets.len() != model.num_shapes() {
        return Err(TrainError::Config(format!(
            "model has {} codewords for {} targets",
            model.num_shapes(),
            targets.len()
        )));
    }
    let shapes = (0..targets.len())
        .into_par_iter()
        .map(|s| shape_grad(model, s, &targets[s], step, cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let mut grad = ModelGrad::zeros(model);
    let mut report = LossReport::default();
    let mut areas = Vec::with_capacity(shapes.len());
    for (s, sg) in shapes.into_iter().enumerate() {
        report.accumulate(&sg.report);
        areas.push(sg.areas);
        for (k, (dg, cg)) in sg.patches.iter().enumerate() {
            grad.decoders[k].add_assign(dg);
            for (a, b) in grad.codewords[s].iter_mut().zip(cg) {
                *a += b;
            }
        }
    }
    Ok(LossGrad {
        report,
        areas,
        grad,
    })
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: u64,
    pub report: LossReport,
    pub areas: Vec<Vec<f64>>,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// One forward/backward pass and Adam update. The step index used for
/// sampling is `state.step` before the update.
pub fn train_step(
    model: &mut AtlasModel,
    targets: &[LossTarget],
    cfg: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<StepReport, TrainError> {
    if state.len() != model.num_params() {
        return Err(TrainError::Config(format!(
            "optimizer state holds {} parameters, model has {}",
            state.len(),
            model.num_params()
        )));
    }
    let step = state.step;
    let lg = loss_and_grad(model, targets, step, cfg)?;
    let mut flat = lg.grad.flatten();
    let grad_norm = clip_global_norm(&mut flat, cfg.clip_norm);
    cfg.adam.update(model.param_slices_mut(), &flat, state);
    Ok(StepReport {
        step,
        report: lg.report,
        areas: lg.areas,
        grad_norm,
    })
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: AtlasModel,
    pub state: OptimizerState,
    /// One summed report per step of this run.
    pub history: Vec<LossReport>,
    /// `(step, per-shape metrics)` at each evaluation.
    pub evaluations: Vec<(u64, Vec<MetricsReport>)>,
    pub final_metrics: Vec<MetricsReport>,
    pub converged: bool,
}

/// Stateful driver around [`train_step`] with logging, periodic
/// evaluation, checkpoints and the convergence rule.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    targets: &'a [TrainTarget],
    loss_targets: Vec<LossTarget>,
    model: AtlasModel,
    state: OptimizerState,
    history: Vec<LossReport>,
    evaluations: Vec<(u64, Vec<MetricsReport>)>,
    log: Option<TrainLog>,
    started: Instant,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, targets: &'a [TrainTarget]) -> Result<Self, TrainError> {
        cfg.validate()?;
        let model = AtlasModel::init(cfg.seed, cfg.patches, cfg.arch, targets.len())?;
        let state = OptimizerState::new(model.num_params());
        Self::resume(cfg, targets, model, state)
    }

    /// Continues from a saved model and optimizer state.
    pub fn resume(
        cfg: TrainConfig,
        targets: &'a [TrainTarget],
        model: AtlasModel,
        state: OptimizerState,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if targets.is_empty() {
            return Err(TrainError::Config("no training targets".into()));
        }
        if model.num_patches() != cfg.patches || model.architecture() != cfg.arch {
            return Err(CheckpointError::ConfigMismatch {
                expected_k: cfg.patches,
                expected: cfg.arch,
                found_k: model.num_patches(),
                found: model.architecture(),
            }
            .into());
        }
        if model.num_shapes() != targets.len() {
            return Err(TrainError::Config(format!(
                "model has {} codewords for {} targets",
                model.num_shapes(),
                targets.len()
            )));
        }
        let log = cfg.log.as_deref().map(TrainLog::open).transpose()?;
        let loss_targets = targets.iter().map(|t| t.loss.clone()).collect();
        Ok(Self {
            cfg,
            targets,
            loss_targets,
            model,
            state,
            history: Vec::new(),
            evaluations: Vec::new(),
            log,
            started: Instant::now(),
        })
    }

    pub fn model(&self) -> &AtlasModel {
        &self.model
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn history(&self) -> &[LossReport] {
        &self.history
    }

    pub fn step(&mut self) -> Result<StepReport, TrainError> {
        let r = train_step(
            &mut self.model,
            &self.loss_targets,
            &self.cfg,
            &mut self.state,
        )?;
        if let Some(log) = &mut self.log {
            log.append(r.step, &r.report, self.started.elapsed().as_secs_f64())?;
        }
        self.history.push(r.report);
        Ok(r)
    }

    pub fn evaluate(&self) -> Result<Vec<MetricsReport>, TrainError> {
        (0..self.targets.len())
            .map(|s| {
                Ok(evaluate_model(
                    &self.model,
                    s,
                    &self.targets[s].cloud,
                    &self.cfg.eval,
                )?)
            })
            .collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TrainError> {
        save_checkpoint(path, &self.model, &self.state)?;
        Ok(())
    }

    /// Trains until the step budget is spent or the loss stops improving.
    pub fn run(self) -> Result<FitResult, TrainError> {
        self.run_with(|_| {})
    }

    /// Like [`Trainer::run`], calling `on_step` after every update.
    pub fn run_with(
        mut self,
        mut on_step: impl FnMut(&StepReport),
    ) -> Result<FitResult, TrainError> {
        let mut totals: Vec<f64> = Vec::with_capacity(self.cfg.steps);
        let mut converged = false;
        for _ in 0..self.cfg.steps {
            let r = self.step()?;
            on_step(&r);
            totals.push(r.report.total);
            let done = self.history.len();
            if self.cfg.eval_interval > 0 && done.is_multiple_of(self.cfg.eval_interval) {
                let m = self.evaluate()?;
                self.evaluations.push((self.state.step, m));
            }
            if let (Some(path), true) = (&self.cfg.checkpoint, self.cfg.checkpoint_interval > 0) {
                if done.is_multiple_of(self.cfg.checkpoint_interval) {
                    self.save(path)?;
                }
            }
            if self.cfg.convergence.is_some_and(|c| c.reached(&totals)) {
                converged = true;
                break;
            }
        }
        if let Some(path) = &self.cfg.checkpoint {
            self.save(path)?;
        }
        let final_metrics = self.evaluate()?;
        Ok(FitResult {
            model: self.model,
            state: self.state,
            history: self.history,
            evaluations: self.evaluations,
            final_metrics,
            converged,
        })
    }
}

/// Trains a fresh model on `targets`.
pub fn fit(targets: &[TrainTarget], cfg: &TrainConfig) -> Result<FitResult, TrainError> {
    Trainer::new(cfg.clone(), targets)?.run()
}
