//! Training objectives: binary cross-entropy, soft Dice, and the anchored
//! refinement loss that penalizes drift from frozen reference predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::sigmoid;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` inside BCE.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Dice,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Bce => "bce",
            LossKind::Dice => "dice",
        })
    }
}

/// A scalar loss and its gradient with respect to the loss input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!(
            "{what}: {a} predictions vs {b} targets"
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy over probabilities; gradient is w.r.t. `y_hat`
/// and is zero wherever the clamp is active.
pub fn bce_loss(y_hat: &[f64], y: &[u8]) -> Result<LossValue> {
    check_len(y_hat.len(), y.len(), "bce")?;
    let n = y_hat.len().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(y_hat.len());
    for (&p, &t) in y_hat.iter().zip(y) {
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let t = f64::from(t);
        total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        let g = if pc != p {
            0.0
        } else {
            (-t / pc + (1.0 - t) / (1.0 - pc)) / n
        };
        grad.push(g);
    }
    Ok(LossValue {
        value: total / n,
        grad,
    })
}

/// `1 − (2·Σp·t + ε)/(Σp + Σt + ε)` on probabilities; gradient w.r.t. `p`.
pub fn dice_loss_probs(p: &[f64], targets: &[u8], eps: f64) -> Result<LossValue> {
    check_len(p.len(), targets.len(), "dice")?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::config(format!(
            "dice epsilon must be positive, got {eps}"
        )));
    }
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_t = 0.0;
    for (&pi, &ti) in p.iter().zip(targets) {
        let t = f64::from(ti);
        inter += pi * t;
        sum_p += pi;
        sum_t += t;
    }
    let num = 2.0 * inter + eps;
    let den = sum_p + sum_t + eps;
    let grad = targets
        .iter()
        .map(|&t| -(2.0 * f64::from(t) * den - num) / (den * den))
        .collect();
    Ok(LossValue {
        value: 1.0 - num / den,
        grad,
    })
}

/// Dice loss on raw logits (sigmoid applied first); gradient w.r.t. logits.
pub fn dice_loss(logits: &[f64], targets: &[u8], eps: f64) -> Result<LossValue> {
    let p: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let mut out = dice_loss_probs(&p, targets, eps)?;
    for (g, pi) in out.grad.iter_mut().zip(&p) {
        *g *= pi * (1.0 - pi);
    }
    Ok(out)
}

/// Base loss on probabilities, gradient w.r.t. the probabilities.
pub fn base_loss(kind: LossKind, p: &[f64], y: &[u8], eps_dice: f64) -> Result<LossValue> {
    match kind {
        LossKind::Bce => bce_loss(p, y),
        LossKind::Dice => dice_loss_probs(p, y, eps_dice),
    }
}

/// `base(ŷ², y) + λ·Σ(ŷ¹ − ŷ²)²`; gradient w.r.t. `y_hat2`. The penalty is a
/// sum over the given samples, not a mean.
pub fn anchored_loss(
    y_hat2: &[f64],
    y: &[u8],
    anchors: &[f64],
    lambda: f64,
    base: LossKind,
    eps_dice: f64,
) -> Result<LossValue> {
    check_len(y_hat2.len(), anchors.len(), "anchors")?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::config(format!(
            "lambda_anchor must be >= 0, got {lambda}"
        )));
    }
    let mut out = base_loss(base, y_hat2, y, eps_dice)?;
    let (penalty, grad) = anchor_penalty(y_hat2, anchors, lambda);
    out.value += penalty;
    for (g, a) in out.grad.iter_mut().zip(grad) {
        *g += a;
    }
    Ok(out)
}

/// `λ·Σ(ŷ¹ − ŷ²)²` and its gradient w.r.t. `ŷ²`.
pub fn anchor_penalty(y_hat2: &[f64], anchors: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let mut sum = 0.0;
    let grad = y_hat2
        .iter()
        .zip(anchors)
        .map(|(&p2, &p1)| {
            let d = p1 - p2;
            sum += d * d;
            -2.0 * lambda * d
        })
        .collect();
    (lambda * sum, grad)
}

/// What the network is trained against: a base loss with an optional anchor
/// penalty. Evaluated on logits, returning the gradient w.r.t. logits.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub base: LossKind,
    pub eps_dice: f64,
    pub anchor: Option<Anchor<'a>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Anchor<'a> {
    pub targets: &'a [f64],
    pub lambda: f64,
}

impl<'a> Objective<'a> {
    pub fn plain(base: LossKind, eps_dice: f64) -> Self {
        Self {
            base,
            eps_dice,
            anchor: None,
        }
    }

    pub fn anchored(base: LossKind, eps_dice: f64, targets: &'a [f64], lambda: f64) -> Self {
        Self {
            base,
            eps_dice,
            anchor: Some(Anchor { targets, lambda }),
        }
    }

    pub fn evaluate(&self, logits: &[f64], labels: &[u8]) -> Result<LossValue> {
        let p: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let mut out = match self.anchor {
            None => base_loss(self.base, &p, labels, self.eps_dice)?,
            Some(a) => anchored_loss(&p, labels, a.targets, a.lambda, self.base, self.eps_dice)?,
        };
        for (g, pi) in out.grad.iter_mut().zip(&p) {
            *g *= pi * (1.0 - pi);
        }
        Ok(out)
    }
}
