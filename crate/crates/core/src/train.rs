//! Two-phase training: plain pre-training on the original data, then
//! refinement on the rebalanced data with a penalty that keeps predictions
//! close to the frozen phase-1 model.
//!
//! Each epoch shuffles with its own RNG stream, numbered by the global epoch
//! index across both phases, so phase 2 continues the phase-1 schedule.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::FlowDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{sigmoid, Adagrad, LossKind, Mode, ModelParams, Objective};
use crate::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub batch_size: usize,
    /// Adagrad learning rate.
    pub eta: f64,
    /// Weight of the phase-2 anchor penalty. The penalty is summed over each
    /// mini-batch, so its strength grows with `batch_size`.
    pub lambda_anchor: f64,
    pub loss_phase1: LossKind,
    pub loss_phase2_base: LossKind,
    /// Rows with probability strictly above this are classified as attacks.
    pub threshold: f64,
    pub seed: u64,
    pub eps_dice: f64,
    pub eps_opt: f64,
    /// Start phase 2 with fresh Adagrad accumulators.
    pub reset_optimizer_between_phases: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_phase1: 50,
            epochs_phase2: 50,
            batch_size: 256,
            eta: 0.01,
            lambda_anchor: 0.1,
            loss_phase1: LossKind::Bce,
            loss_phase2_base: LossKind::Dice,
            threshold: 0.5,
            seed: 42,
            eps_dice: 1.0,
            eps_opt: 1e-10,
            reset_optimizer_between_phases: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!(
                "train.eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.lambda_anchor >= 0.0 && self.lambda_anchor.is_finite()) {
            return Err(Error::config(format!(
                "train.lambda_anchor must be >= 0, got {}",
                self.lambda_anchor
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(format!(
                "train.threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.eps_dice > 0.0) || !(self.eps_opt > 0.0) {
            return Err(Error::config(
                "train.eps_dice and train.eps_opt must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub phase: u8,
    /// 1-based within the phase.
    pub epoch: usize,
    /// Row-weighted mean of the mini-batch losses.
    pub loss: f64,
    /// Fraction of rows classified correctly during the epoch (train mode).
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn phase(&self, phase: u8) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub fn extend(&mut self, other: TrainReport) {
        self.records.extend(other.records);
        self.wall_time += other.wall_time;
    }

    /// `phase,epoch,loss,accuracy`. Wall time is left out so the file is
    /// reproducible.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,epoch,loss,accuracy\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{:?},{:?}", r.phase, r.epoch, r.loss, r.accuracy);
        }
        s
    }
}

/// Batch index lists for one epoch. A trailing batch of one row is folded into
/// the previous batch because train-mode batch norm needs two rows.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if batch_size > 1 && out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Runs training phases against one model, carrying the optimizer state and
/// the global epoch counter between them.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    optimizer: Adagrad,
    epochs_done: u64,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            optimizer: Adagrad::new(cfg.eta, cfg.eps_opt),
            epochs_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn optimizer(&self) -> &Adagrad {
        &self.optimizer
    }

    /// Pre-training with `loss_phase1`.
    pub fn phase1(&mut self, model: &mut ModelParams, d: &FlowDataset) -> Result<TrainReport> {
        let obj = Objective::plain(self.cfg.loss_phase1, self.cfg.eps_dice);
        self.run(model, d, 1, self.cfg.epochs_phase1, |_| obj, None)
    }

    /// Refinement with `loss_phase2_base + λ·Σ(anchor − ŷ)²`.
    pub fn phase2(
        &mut self,
        model: &mut ModelParams,
        d_balanced: &FlowDataset,
        anchors: &[f64],
    ) -> Result<TrainReport> {
        if anchors.len() != d_balanced.n_rows() {
            return Err(Error::shape(format!(
                "{} anchors for {} rows",
                anchors.len(),
                d_balanced.n_rows()
            )));
        }
        if self.cfg.reset_optimizer_between_phases {
            self.optimizer.reset();
        }
        let (base, eps, lambda) = (
            self.cfg.loss_phase2_base,
            self.cfg.eps_dice,
            self.cfg.lambda_anchor,
        );
        self.run(
            model,
            d_balanced,
            2,
            self.cfg.epochs_phase2,
            |a| Objective::anchored(base, eps, a, lambda),
            Some(anchors),
        )
    }

    fn run<F>(
        &mut self,
        model: &mut ModelParams,
        d: &FlowDataset,
        phase: u8,
        epochs: usize,
        objective: F,
        anchors: Option<&[f64]>,
    ) -> Result<TrainReport>
    where
        F: Fn(&[f64]) -> Objective<'_>,
    {
        let started = Instant::now();
        let mut report = TrainReport::default();
        if epochs == 0 {
            return Ok(report);
        }
        if d.is_empty() {
            return Err(Error::data(format!("phase {phase}: empty training set")));
        }
        if d.n_features() != model.n_inputs() {
            return Err(Error::shape(format!(
                "model expects {} features, data has {}",
                model.n_inputs(),
                d.n_features()
            )));
        }
        let n = d.n_rows();
        let mut batch_anchors = Vec::new();
        for epoch in 1..=epochs {
            let mut rng = seeded::rng(self.cfg.seed, self.epochs_done);
            let order = seeded::permutation(n, &mut rng);
            let (mut loss_sum, mut correct) = (0.0, 0usize);
            for idx in batches(&order, self.cfg.batch_size) {
                let x = d.features().select_rows(idx);
                let y: Vec<u8> = idx.iter().map(|&i| d.labels()[i]).collect();
                batch_anchors.clear();
                if let Some(a) = anchors {
                    batch_anchors.extend(idx.iter().map(|&i| a[i]));
                }
                let obj = objective(&batch_anchors);
                let (logits, cache) = model.forward(&x, Mode::Train)?;
                let loss = obj.evaluate(&logits, &y)?;
                if !loss.value.is_finite() {
                    return Err(Error::data(format!(
                        "training diverged: non-finite loss in phase {phase}, epoch {epoch}"
                    )));
                }
                let grads = model.backward(&cache, &loss.grad)?;
                model.update_running_stats(&cache);
                self.optimizer.step(model, &grads)?;

                loss_sum += loss.value * idx.len() as f64;
                correct += logits
                    .iter()
                    .zip(&y)
                    .filter(|(&z, &t)| u8::from(sigmoid(z) > self.cfg.threshold) == t)
                    .count();
            }
            self.epochs_done += 1;
            let rec = EpochRecord {
                phase,
                epoch,
                loss: loss_sum / n as f64,
                accuracy: correct as f64 / n as f64,
            };
            log::debug!(
                "phase {} epoch {} loss {:.6} accuracy {:.4}",
                rec.phase,
                rec.epoch,
                rec.loss,
                rec.accuracy
            );
            report.records.push(rec);
        }
        report.wall_time = started.elapsed();
        Ok(report)
    }
}

pub fn train_phase1(
    model: &mut ModelParams,
    d: &FlowDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    Trainer::new(cfg)?.phase1(model, d)
}

/// Phase 2 with a fresh optimizer, with shuffling continuing after
/// `epochs_phase1` epochs as it does inside [`train_dual_phase`].
pub fn train_phase2(
    model: &mut ModelParams,
    d_balanced: &FlowDataset,
    anchors: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut t = Trainer::new(cfg)?;
    t.epochs_done = cfg.epochs_phase1 as u64;
    t.phase2(model, d_balanced, anchors)
}

/// Frozen-model probabilities on every row of `d_balanced`, synthetic rows
/// included.
pub fn compute_anchors(model: &ModelParams, d_balanced: &FlowDataset) -> Result<Vec<f64>> {
    predict_proba(model, d_balanced.features())
}

/// Sigmoid of the final logit per row, batch norm in inference mode.
pub fn predict_proba(model: &ModelParams, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.n_inputs() {
        return Err(Error::shape(format!(
            "model expects {} features, data has {}",
            model.n_inputs(),
            x.cols()
        )));
    }
    Ok(model
        .logits(x, Mode::Infer)?
        .into_iter()
        .map(sigmoid)
        .collect())
}

/// 1 where `p > threshold` (strict), else 0.
pub fn classify(proba: &[f64], threshold: f64) -> Vec<u8> {
    proba.iter().map(|&p| u8::from(p > threshold)).collect()
}

#[derive(Debug, Clone)]
pub struct DualPhaseOutcome {
    pub report: TrainReport,
    /// Phase-1 probabilities on the balanced data.
    pub anchors: Vec<f64>,
}

/// Phase 1 on `d`, anchors from the frozen phase-1 model, phase 2 on
/// `d_balanced`.
pub fn train_dual_phase(
    model: &mut ModelParams,
    d: &FlowDataset,
    d_balanced: &FlowDataset,
    cfg: &TrainConfig,
) -> Result<DualPhaseOutcome> {
    let mut t = Trainer::new(cfg)?;
    let mut report = t.phase1(model, d)?;
    let anchors = compute_anchors(model, d_balanced)?;
    report.extend(t.phase2(model, d_balanced, &anchors)?);
    Ok(DualPhaseOutcome { report, anchors })
}
