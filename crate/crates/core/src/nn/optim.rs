use crate::error::{Error, Result};
use crate::nn::model::ModelParams;

/// Adagrad: `G ← G + g²`, then `w ← w − η·g/√(G + ε)` using the updated `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adagrad {
    pub eta: f64,
    pub eps: f64,
    /// One accumulator per tensor, created on the first step.
    accum: Vec<Vec<f64>>,
}

impl Adagrad {
    pub fn new(eta: f64, eps: f64) -> Self {
        Self {
            eta,
            eps,
            accum: Vec::new(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accum
    }

    pub fn reset(&mut self) {
        self.accum.clear();
    }

    /// One update over parallel lists of parameter and gradient tensors.
    pub fn step_tensors(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.accum.is_empty() {
            self.accum = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.accum.len() != params.len() {
            return Err(Error::shape(
                "optimizer state does not match parameter list",
            ));
        }
        for (t, ((p, g), acc)) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.accum)
            .enumerate()
        {
            if p.len() != g.len() || p.len() != acc.len() {
                return Err(Error::shape(format!(
                    "tensor {t}: {} parameters, {} gradients, {} accumulators",
                    p.len(),
                    g.len(),
                    acc.len()
                )));
            }
            for ((w, &gi), a) in p.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                *a += gi * gi;
                *w -= self.eta * gi / (*a + self.eps).sqrt();
            }
        }
        Ok(())
    }

    /// Updates every trainable tensor of `model` from `grads` (same structure).
    pub fn step(&mut self, model: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        let g = grads.tensors();
        let g: Vec<&[f64]> = g.iter().filter(|t| t.trainable).map(|t| t.data).collect();
        let mut p = model.trainable_mut();
        let mut p: Vec<&mut [f64]> = p.iter_mut().map(|t| &mut *t.data).collect();
        self.step_tensors(&mut p, &g)
    }
}

/// Single-tensor form of [`Adagrad::step_tensors`].
pub fn adagrad_step(state: &mut Adagrad, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step_tensors(&mut [params], &[grads])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut opt = Adagrad::new(0.1, 1e-10);
        let mut w = [0.5, -1.0];
        adagrad_step(&mut opt, &mut w, &[0.0, 0.0]).unwrap();
        assert_eq!(w, [0.5, -1.0]);
        assert_eq!(opt.accumulators(), &[vec![0.0, 0.0]]);
    }

    #[test]
    fn two_step_recurrence() {
        let mut opt = Adagrad::new(0.1, 1e-10);
        let mut w = [0.0];
        adagrad_step(&mut opt, &mut w, &[2.0]).unwrap();
        assert_eq!(opt.accumulators()[0], vec![4.0]);
        assert!((w[0] + 0.1).abs() < 1e-10);
        let before = w[0];
        adagrad_step(&mut opt, &mut w, &[2.0]).unwrap();
        assert_eq!(opt.accumulators()[0], vec![8.0]);
        // Δw = −0.1·2/√8
        assert!((w[0] - before + 0.07071067811865475).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut opt = Adagrad::new(0.1, 1e-10);
        let mut w = [0.0, 1.0];
        assert!(adagrad_step(&mut opt, &mut w, &[1.0]).is_err());
        let mut opt = Adagrad::new(0.1, 1e-10);
        adagrad_step(&mut opt, &mut w, &[1.0, 1.0]).unwrap();
        let mut w3 = [0.0; 3];
        assert!(adagrad_step(&mut opt, &mut w3, &[1.0; 3]).is_err());
    }

    #[test]
    fn accumulator_grows_and_steps_shrink() {
        let mut opt = Adagrad::new(0.05, 1e-10);
        let mut w = [0.0];
        let mut last_acc = 0.0;
        let mut last_step = f64::INFINITY;
        for _ in 0..20 {
            let before = w[0];
            adagrad_step(&mut opt, &mut w, &[-0.7]).unwrap();
            let acc = opt.accumulators()[0][0];
            let step = (w[0] - before).abs();
            assert!(acc >= last_acc && step <= last_step);
            last_acc = acc;
            last_step = step;
        }
    }
}
