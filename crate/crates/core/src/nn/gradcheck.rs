//! Finite-difference verification of the analytic gradients.

use std::fmt;

use crate::error::Result;
use crate::matrix::Matrix;
use crate::nn::layers::Mode;
use crate::nn::loss::Objective;
use crate::nn::model::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    /// Largest `|a − n| / max(|a|, |n|, 1e-8)` over the tensor's entries.
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn worst(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tensors {
            writeln!(
                f,
                "{:<32} {:>6}  {:.3e}  {}",
                t.name,
                t.len,
                t.max_rel_error,
                if t.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backprop gradients with central differences `(L(θ+h) − L(θ−h))/2h`
/// for every trainable entry. Running statistics are never updated, so in
/// either mode the loss is a pure function of the parameters.
pub fn gradient_check(
    model: &ModelParams,
    x: &Matrix,
    labels: &[u8],
    objective: &Objective<'_>,
    mode: Mode,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, grads, _) = model.loss_and_grad(x, labels, objective, mode)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .filter(|t| t.trainable)
        .map(|t| (t.name, t.data.to_vec()))
        .collect();

    let loss_at = |m: &ModelParams| -> Result<f64> {
        let logits = m.logits(x, mode)?;
        Ok(objective.evaluate(&logits, labels)?.value)
    };

    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(analytic.len());
    for (ti, (name, a)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (j, &aj) in a.iter().enumerate() {
            let original = probe.trainable_mut()[ti].data[j];
            probe.trainable_mut()[ti].data[j] = original + h;
            let up = loss_at(&probe)?;
            probe.trainable_mut()[ti].data[j] = original - h;
            let down = loss_at(&probe)?;
            probe.trainable_mut()[ti].data[j] = original;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(aj, numeric));
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            len: a.len(),
            max_rel_error: worst,
            passed: worst < tol,
        });
    }
    Ok(GradCheckReport {
        tolerance: tol,
        step: h,
        tensors,
    })
}
