//! Optimization loop: per-method batch objectives, Adam, early stopping on
//! validation WA, k-fold runs and the three-system comparison.
//!
//! Evaluation passes are always dropout-free single forwards, projection
//! layers included.

use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{batch_iter, fixed_split, make_folds, Dataset, Split};
use crate::encoder::{BoundModel, EncoderConfig, RepresentationQuad, TurboModel};
use crate::error::{Error, Result};
use crate::losses::{
    check_lambda, cross_entropy_loss, cross_only_loss, total_loss, turbo_loss, ContrastiveConfig,
    ContrastiveTerms, LossBreakdown,
};
use crate::metrics::{
    alignment, classification_report, equal_error_rate, normalize_rows, uniformity, MetricsReport,
};
use crate::numerics::{RngState, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    ClCross,
    Turbo,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Vanilla, Method::ClCross, Method::Turbo];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::ClCross => "cl_cross",
            Method::Turbo => "turbo",
        }
    }

    pub fn is_contrastive(self) -> bool {
        self != Method::Vanilla
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown method {s:?}, expected vanilla, cl_cross or turbo"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub temperature: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub method: Method,
    pub joint_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Number of cross-validation folds.
    pub folds: usize,
    /// Run only the first `max_folds` folds of the plan.
    pub max_folds: Option<usize>,
    /// `[train, validation]` fractions; replaces k-fold when set.
    pub fixed_split: Option<[f64; 2]>,
    pub symmetric_cross: bool,
    /// Average CE over both passes instead of pass 1 only (turbo).
    pub ce_both_passes: bool,
}

impl Default for TrainConfig {
    /// Synthetic preset.
    fn default() -> Self {
        TrainConfig {
            lambda: 0.5,
            temperature: 0.07,
            dropout: 0.2,
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            method: Method::Turbo,
            joint_dim: 64,
            hidden_dims: vec![128],
            folds: 10,
            max_folds: None,
            fixed_split: None,
            symmetric_cross: false,
            ce_both_passes: false,
        }
    }
}

impl TrainConfig {
    /// Learning rate 1e-5 with every other default unchanged.
    pub fn slow() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            ..TrainConfig::default()
        }
    }

    pub fn contrastive(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            temperature: self.temperature,
            symmetric_cross: self.symmetric_cross,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.patience < 1 {
            return bad("patience must be >= 1".into());
        }
        if self.batch_size < 1 || (self.method.is_contrastive() && self.batch_size < 2) {
            return bad(format!(
                "batch size {} too small for method {}",
                self.batch_size, self.method
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.max_epochs < 1 || self.joint_dim < 1 {
            return bad("max_epochs and joint_dim must be >= 1".into());
        }
        if self.hidden_dims.contains(&0) {
            return bad(format!(
                "hidden widths must be >= 1, got {:?}",
                self.hidden_dims
            ));
        }
        if self.fixed_split.is_none() && self.folds < 3 {
            return bad(format!("need at least 3 folds, got {}", self.folds));
        }
        if self.max_folds == Some(0) {
            return bad("max_folds must be >= 1".into());
        }
        Ok(())
    }

    pub fn encoder_configs(&self, d1: usize, d2: usize) -> (EncoderConfig, EncoderConfig) {
        let cfg = |d| EncoderConfig::new(d, self.hidden_dims.clone(), self.joint_dim, self.dropout);
        (cfg(d1), cfg(d2))
    }
}

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Bias-corrected Adam update from each parameter's gradient buffer. Nothing
/// is modified if any gradient is non-finite.
pub fn adam_step(
    mut params: Vec<&mut Tensor>,
    names: &[String],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "optimizer tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (k, p) in params.iter().enumerate() {
        let name = names.get(k).map(String::as_str).unwrap_or("?");
        let g = p
            .grad()
            .ok_or_else(|| Error::Contract(format!("parameter {name} has no gradient buffer")))?;
        if g.len() != state.m[k].len() {
            return Err(Error::dim("adam_step", &[g.len()], &[state.m[k].len()]));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in {name} at index {i}"
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
    for (k, p) in params.iter_mut().enumerate() {
        let g = p.grad().expect("checked above").to_vec();
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Graph handles of one batch objective.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub terms: Option<ContrastiveTerms>,
    pub ce: Var,
    pub total: Var,
}

impl Objective {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown::read(tape, self.terms.as_ref(), self.ce, self.total)
    }
}

/// Records the method's loss for one batch. With `train` the forward passes
/// sample masks from `rng`; otherwise a single dropout-free pass is used.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective(
    tape: &mut Tape,
    bound: &BoundModel,
    audio: Var,
    text: Var,
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &RngState,
    train: bool,
) -> Result<Objective> {
    let single = |tape: &mut Tape| {
        if train {
            bound.encode_train(tape, audio, text, &rng.fork("pass1"))
        } else {
            bound.encode_eval(tape, audio, text)
        }
    };
    match cfg.method {
        Method::Vanilla => {
            let (h_a, h_t) = single(tape)?;
            let probs = bound.classify(tape, h_a, h_t)?;
            let ce = cross_entropy_loss(tape, probs, labels)?;
            Ok(Objective {
                terms: None,
                ce,
                total: ce,
            })
        }
        Method::ClCross => {
            let (h_a, h_t) = single(tape)?;
            let terms = cross_only_loss(tape, h_a, h_t, &cfg.contrastive())?;
            let probs = bound.classify(tape, h_a, h_t)?;
            let ce = cross_entropy_loss(tape, probs, labels)?;
            let total = total_loss(tape, ce, terms.turbo, cfg.lambda)?;
            Ok(Objective {
                terms: Some(terms),
                ce,
                total,
            })
        }
        Method::Turbo => {
            let quad = if train {
                bound.dual_forward(tape, audio, text, rng)?
            } else {
                let (h_a, h_t) = bound.encode_eval(tape, audio, text)?;
                RepresentationQuad::single(h_a, h_t)
            };
            let terms = turbo_loss(tape, &quad, &cfg.contrastive())?;
            let probs = bound.classify(tape, quad.h_a1, quad.h_t1)?;
            let mut ce = cross_entropy_loss(tape, probs, labels)?;
            if cfg.ce_both_passes {
                let probs2 = bound.classify(tape, quad.h_a2, quad.h_t2)?;
                let ce2 = cross_entropy_loss(tape, probs2, labels)?;
                let sum = tape.add(ce, ce2)?;
                ce = tape.scale(sum, 0.5);
            }
            let total = total_loss(tape, ce, terms.turbo, cfg.lambda)?;
            Ok(Objective {
                terms: Some(terms),
                ce,
                total,
            })
        }
    }
}

/// Checks the breakdown identities for `method` to within 1e-12.
pub fn check_breakdown(b: &LossBreakdown, method: Method, lambda: f64) -> Result<()> {
    const TOL: f64 = 1e-12;
    let (sum_err, blend_err) = match method {
        Method::Vanilla => (b.turbo.abs(), (b.total - b.ce).abs()),
        _ => b.identity_residuals(lambda),
    };
    if sum_err > TOL || blend_err > TOL {
        return Err(Error::Numeric(format!(
            "loss breakdown identity violated: sum residual {sum_err:e}, blend residual {blend_err:e}"
        )));
    }
    Ok(())
}

/// Forward, backward and one Adam update on a single batch.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    model: &mut TurboModel,
    adam: &mut AdamState,
    audio: &Tensor,
    text: &Tensor,
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &RngState,
) -> Result<LossBreakdown> {
    if cfg.method.is_contrastive() && labels.len() < 2 {
        return Err(Error::Contract(format!(
            "{} needs batches of at least 2 samples",
            cfg.method
        )));
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let a = tape.constant(audio);
    let t = tape.constant(text);
    let obj = batch_objective(&mut tape, &bound, a, t, labels, cfg, rng, true)?;
    let breakdown = obj.breakdown(&tape);
    if !breakdown.total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite training loss {}",
            breakdown.total
        )));
    }
    check_breakdown(&breakdown, cfg.method, cfg.lambda)?;
    tape.backward(obj.total)?;
    model.zero_grad();
    model.accumulate_grads(&tape, &bound)?;
    let names = model.param_names();
    adam_step(model.params_mut(), &names, adam, cfg.learning_rate)?;
    Ok(breakdown)
}

/// Patience counter over a maximized score.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Only a strict improvement moves the best epoch.
    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if score <= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Dropout-free outputs for a set of samples.
#[derive(Debug, Clone)]
pub struct Representations {
    pub h_a: Tensor,
    pub h_t: Tensor,
    pub probs: Tensor,
}

const EVAL_CHUNK: usize = 512;

pub fn represent(model: &TurboModel, ds: &Dataset, indices: &[usize]) -> Result<Representations> {
    if indices.is_empty() {
        return Err(Error::Contract("no samples to evaluate".into()));
    }
    let (mut h_a, mut h_t, mut probs) = (Vec::new(), Vec::new(), Vec::new());
    for chunk in indices.chunks(EVAL_CHUNK) {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let a = tape.constant(&ds.audio(chunk));
        let t = tape.constant(&ds.text(chunk));
        let (ra, rt) = bound.encode_eval(&mut tape, a, t)?;
        let p = bound.classify(&mut tape, ra, rt)?;
        h_a.extend_from_slice(tape.value(ra));
        h_t.extend_from_slice(tape.value(rt));
        probs.extend_from_slice(tape.value(p));
    }
    let n = indices.len();
    Ok(Representations {
        h_a: Tensor::new(vec![n, model.joint_dim()], h_a)?,
        h_t: Tensor::new(vec![n, model.joint_dim()], h_t)?,
        probs: Tensor::new(vec![n, model.classes()], probs)?,
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Task metrics plus alignment (α = 2) and uniformity (t = 2) on the
/// L2-normalized projections. EER scores with the positive-class probability
/// and is reported only when C = 2 and both classes are present.
pub fn evaluate_split(
    model: &TurboModel,
    ds: &Dataset,
    indices: &[usize],
) -> Result<MetricsReport> {
    let reps = represent(model, ds, indices)?;
    metrics_from(&reps, &ds.labels(indices), ds.classes)
}

pub fn metrics_from(
    reps: &Representations,
    labels: &[usize],
    classes: usize,
) -> Result<MetricsReport> {
    let n = labels.len();
    let preds: Vec<usize> = (0..n).map(|i| argmax(reps.probs.row(i))).collect();
    let cls = classification_report(&preds, labels, classes)?;
    let eer = if classes == 2 {
        let scores: Vec<f64> = (0..n).map(|i| reps.probs.at(i, 1)).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        match equal_error_rate(&scores, &positive) {
            Ok(e) => Some(e),
            Err(Error::Contract(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let za = normalize_rows(&reps.h_a)?;
    let zt = normalize_rows(&reps.h_t)?;
    let (uniformity_audio, uniformity_text) = if n >= 2 {
        (uniformity(&za, 2.0)?, uniformity(&zt, 2.0)?)
    } else {
        (0.0, 0.0)
    };
    Ok(MetricsReport {
        wa: cls.wa,
        ua: cls.ua,
        acc: cls.acc,
        eer,
        alignment: alignment(&za, &zt, 2.0)?,
        uniformity_audio,
        uniformity_text,
        uniformity_mean: 0.5 * (uniformity_audio + uniformity_text),
        samples: n,
    })
}

/// Mean eval-mode loss over `indices`, batched like training but keeping the
/// remainder.
fn eval_losses(
    model: &TurboModel,
    ds: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let rng = RngState::new(cfg.seed, "eval");
    let mut parts = Vec::new();
    for batch in batch_iter(indices, cfg.batch_size, None, false)? {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let a = tape.constant(&ds.audio(&batch));
        let t = tape.constant(&ds.text(&batch));
        let labels = ds.labels(&batch);
        let obj = batch_objective(&mut tape, &bound, a, t, &labels, cfg, &rng, false)?;
        parts.push(obj.breakdown(&tape));
    }
    Ok(LossBreakdown::mean(&parts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub validation: LossBreakdown,
    pub validation_wa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub epochs: Vec<EpochSummary>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub best_validation_wa: f64,
    pub test: MetricsReport,
}

/// One training step as seen by [`fit_with_observer`].
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub breakdown: LossBreakdown,
}

pub fn fit(
    ds: &Dataset,
    split: &Split,
    fold: usize,
    cfg: &TrainConfig,
) -> Result<(TurboModel, FoldReport)> {
    fit_with_observer(ds, split, fold, cfg, &mut |_| {})
}

/// Trains on `split.train` until validation WA stalls for `patience` epochs
/// or `max_epochs` is reached, restores the best epoch and scores the test
/// list. Epochs are numbered from 1.
pub fn fit_with_observer(
    ds: &Dataset,
    split: &Split,
    fold: usize,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<(TurboModel, FoldReport)> {
    cfg.validate()?;
    if split.train.len() < cfg.batch_size {
        return Err(Error::Contract(format!(
            "training list has {} samples, fewer than one batch of {}",
            split.train.len(),
            cfg.batch_size
        )));
    }
    if split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::Contract(
            "validation and test lists must be non-empty".into(),
        ));
    }
    let (audio_cfg, text_cfg) = cfg.encoder_configs(ds.d1, ds.d2);
    let init = RngState::new(cfg.seed, format!("fold{fold}/init"));
    let mut model = TurboModel::init(audio_cfg, text_cfg, ds.classes, &init)?;
    let mut adam = AdamState::new(&model.params());
    let root = RngState::new(cfg.seed, format!("fold{fold}/train"));

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_model = model.clone();
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let mut shuffle = root.fork(&format!("epoch{epoch}/shuffle"));
        let batches = batch_iter(&split.train, cfg.batch_size, Some(&mut shuffle), true)?;
        let mut parts = Vec::with_capacity(batches.len());
        for (step, batch) in batches.iter().enumerate() {
            let rng = root.fork(&format!("epoch{epoch}/step{step}"));
            let labels = ds.labels(batch);
            let b = train_step(
                &mut model,
                &mut adam,
                &ds.audio(batch),
                &ds.text(batch),
                &labels,
                cfg,
                &rng,
            )?;
            observer(&StepRecord {
                epoch,
                step,
                breakdown: b,
            });
            parts.push(b);
        }
        let validation = eval_losses(&model, ds, &split.validation, cfg)?;
        let wa = evaluate_split(&model, ds, &split.validation)?.wa;
        debug!(
            "{} fold {fold} epoch {epoch}: train total {:.4}, validation WA {wa:.4}",
            cfg.method,
            LossBreakdown::mean(&parts).total
        );
        epochs.push(EpochSummary {
            epoch,
            train: LossBreakdown::mean(&parts),
            validation,
            validation_wa: wa,
        });
        match stopper.observe(epoch, wa) {
            StopDecision::Improved => best_model = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    let (best_epoch, best_validation_wa) = stopper.best().expect("at least one epoch");
    let stopped_epoch = epochs.len();
    let test = evaluate_split(&best_model, ds, &split.test)?;
    info!(
        "{} seed {} fold {fold}: best epoch {best_epoch}/{stopped_epoch}, test WA {:.4}",
        cfg.method, cfg.seed, test.wa
    );
    Ok((
        best_model,
        FoldReport {
            fold,
            epochs,
            best_epoch,
            stopped_epoch,
            best_validation_wa,
            test,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub mean: MetricsReport,
    pub std: MetricsReport,
}

/// The splits a run trains on, per `cfg`.
pub fn plan_splits(n: usize, cfg: &TrainConfig) -> Result<Vec<Split>> {
    let mut splits = match cfg.fixed_split {
        Some([train, val]) => vec![fixed_split(n, train, val, cfg.seed)?],
        None => make_folds(n, cfg.folds, cfg.seed)?.folds,
    };
    if let Some(m) = cfg.max_folds {
        splits.truncate(m);
    }
    Ok(splits)
}

/// Trains every planned fold; returns the report and the best model per fold.
pub fn run(ds: &Dataset, cfg: &TrainConfig) -> Result<(RunReport, Vec<TurboModel>)> {
    cfg.validate()?;
    let splits = plan_splits(ds.len(), cfg)?;
    let results: Vec<(TurboModel, FoldReport)> = splits
        .par_iter()
        .enumerate()
        .map(|(f, split)| fit(ds, split, f, cfg))
        .collect::<Result<_>>()?;
    let (models, folds): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let tests: Vec<MetricsReport> = folds.iter().map(|f| f.test.clone()).collect();
    let (mean, std) = summarize(&tests);
    Ok((
        RunReport {
            method: cfg.method,
            seed: cfg.seed,
            folds,
            mean,
            std,
        },
        models,
    ))
}

/// Field-wise mean and sample standard deviation. EER is kept only when every
/// report has one.
pub fn summarize(reports: &[MetricsReport]) -> (MetricsReport, MetricsReport) {
    let n = reports.len() as f64;
    let stat = |f: &dyn Fn(&MetricsReport) -> f64| -> (f64, f64) {
        let mean = reports.iter().map(f).sum::<f64>() / n;
        let var = if reports.len() > 1 {
            reports.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let (wa, wa_s) = stat(&|r| r.wa);
    let (ua, ua_s) = stat(&|r| r.ua);
    let (acc, acc_s) = stat(&|r| r.acc);
    let (al, al_s) = stat(&|r| r.alignment);
    let (ua_a, ua_a_s) = stat(&|r| r.uniformity_audio);
    let (ua_t, ua_t_s) = stat(&|r| r.uniformity_text);
    let (um, um_s) = stat(&|r| r.uniformity_mean);
    let (eer, eer_s) = if reports.iter().all(|r| r.eer.is_some()) {
        let (m, s) = stat(&|r| r.eer.expect("checked"));
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    let samples = reports.iter().map(|r| r.samples).sum();
    (
        MetricsReport {
            wa,
            ua,
            acc,
            eer,
            alignment: al,
            uniformity_audio: ua_a,
            uniformity_text: ua_t,
            uniformity_mean: um,
            samples,
        },
        MetricsReport {
            wa: wa_s,
            ua: ua_s,
            acc: acc_s,
            eer: eer_s,
            alignment: al_s,
            uniformity_audio: ua_a_s,
            uniformity_text: ua_t_s,
            uniformity_mean: um_s,
            samples,
        },
    )
}

/// One method's seed-averaged test metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub wa: f64,
    pub ua: f64,
    pub acc: f64,
    pub eer: Option<f64>,
    pub alignment: f64,
    pub uniformity_audio: f64,
    pub uniformity_text: f64,
    pub uniformity_mean: f64,
    pub wa_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<RunReport>,
}

impl ComparisonReport {
    pub fn row(&self, method: Method) -> &ComparisonRow {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .expect("one row per method")
    }
}

/// Trains all three methods on every seed with shared folds and
/// initializations. Rows are ordered vanilla, cl_cross, turbo.
pub fn run_comparison(ds: &Dataset, base: &TrainConfig, seeds: &[u64]) -> Result<ComparisonReport> {
    if seeds.is_empty() {
        return Err(Error::Contract("compare needs at least one seed".into()));
    }
    let jobs: Vec<(Method, u64)> = Method::ALL
        .into_iter()
        .flat_map(|m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let runs: Vec<RunReport> = jobs
        .par_iter()
        .map(|&(method, seed)| {
            let cfg = TrainConfig {
                method,
                seed,
                ..base.clone()
            };
            run(ds, &cfg).map(|(report, _)| report)
        })
        .collect::<Result<_>>()?;
    let rows = Method::ALL
        .into_iter()
        .map(|method| {
            let means: Vec<MetricsReport> = runs
                .iter()
                .filter(|r| r.method == method)
                .map(|r| r.mean.clone())
                .collect();
            let (m, s) = summarize(&means);
            ComparisonRow {
                method,
                wa: m.wa,
                ua: m.ua,
                acc: m.acc,
                eer: m.eer,
                alignment: m.alignment,
                uniformity_audio: m.uniformity_audio,
                uniformity_text: m.uniformity_text,
                uniformity_mean: m.uniformity_mean,
                wa_std: s.wa,
            }
        })
        .collect();
    Ok(ComparisonReport {
        seeds: seeds.to_vec(),
        rows,
        runs,
    })
}
