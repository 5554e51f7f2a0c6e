//! Layer primitives with hand-written backward passes.
//!
//! Flows are treated as length-1 sequences whose channels are the features,
//! so a 1×1 convolution is exactly an affine map and the residual blocks are
//! built from [`AffineParams`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::seeded::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Batch statistics in batch norm.
    Train,
    /// Running statistics in batch norm; rows are independent.
    Infer,
}

/// `y = x·Wᵀ + b`, with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AffineParams {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::shape(format!(
                "weight has {} rows but bias has {} entries",
                weight.rows(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(n_out, n_in),
            bias: vec![0.0; n_out],
        }
    }

    /// He-style uniform init, `U(−√(6/fan_in), √(6/fan_in))`, zero bias.
    pub fn he_uniform(n_in: usize, n_out: usize, rng: &mut SeededRng) -> Self {
        let bound = (6.0 / n_in.max(1) as f64).sqrt();
        let mut p = Self::zeros(n_in, n_out);
        for w in p.weight.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
        p
    }

    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul_transposed(&self.weight)?;
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut AffineParams) -> Matrix {
        dy.transpose_matmul_into(x, &mut grad.weight);
        for r in 0..dy.rows() {
            for (g, d) in grad.bias.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        dy.matmul(&self.weight).expect("shapes checked in forward")
    }
}

pub fn affine_forward(p: &AffineParams, x: &Matrix) -> Result<Matrix> {
    p.forward(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight of the old running value: `r ← momentum·r + (1 − momentum)·batch`.
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: Mode,
    xhat: Matrix,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BatchNormParams {
    pub fn new(width: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum,
            eps,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, BatchNormCache)> {
        let (n, w) = x.shape();
        if w != self.width() {
            return Err(Error::shape(format!(
                "batch norm of width {} fed {w} columns",
                self.width()
            )));
        }
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::shape(
                        "batch norm in train mode needs a batch of at least 2 rows",
                    ));
                }
                let mut mean = vec![0.0; w];
                for r in x.iter_rows() {
                    for (m, v) in mean.iter_mut().zip(r) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; w];
                for r in x.iter_rows() {
                    for c in 0..w {
                        let d = r[c] - mean[c];
                        var[c] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                (mean, var)
            }
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = x.clone();
        let mut out = Matrix::zeros(n, w);
        for r in 0..n {
            let xr = xhat.row_mut(r);
            for c in 0..w {
                xr[c] = (xr[c] - mean[c]) * inv_std[c];
            }
            let or = out.row_mut(r);
            for c in 0..w {
                or[c] = self.gamma[c] * xr[c] + self.beta[c];
            }
        }
        Ok((
            out,
            BatchNormCache {
                mode,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache,
        dy: &Matrix,
        grad: &mut BatchNormParams,
    ) -> Matrix {
        let (n, w) = dy.shape();
        let mut sum_dy = vec![0.0; w];
        let mut sum_dy_xhat = vec![0.0; w];
        for r in 0..n {
            let d = dy.row(r);
            let xh = cache.xhat.row(r);
            for c in 0..w {
                sum_dy[c] += d[c];
                sum_dy_xhat[c] += d[c] * xh[c];
            }
        }
        for c in 0..w {
            grad.beta[c] += sum_dy[c];
            grad.gamma[c] += sum_dy_xhat[c];
        }
        let mut dx = Matrix::zeros(n, w);
        match cache.mode {
            Mode::Infer => {
                for r in 0..n {
                    let d = dy.row(r);
                    for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                        *o = d[c] * self.gamma[c] * cache.inv_std[c];
                    }
                }
            }
            Mode::Train => {
                // dx = γ·σ⁻¹/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
                let nf = n as f64;
                for r in 0..n {
                    let d = dy.row(r);
                    let xh = cache.xhat.row(r);
                    for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                        let k = self.gamma[c] * cache.inv_std[c] / nf;
                        *o = k * (nf * d[c] - sum_dy[c] - xh[c] * sum_dy_xhat[c]);
                    }
                }
            }
        }
        dx
    }

    /// Folds a train-mode batch's statistics into the running estimates.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        for c in 0..self.width() {
            self.running_mean[c] = m * self.running_mean[c] + (1.0 - m) * cache.batch_mean[c];
            self.running_var[c] = m * self.running_var[c] + (1.0 - m) * cache.batch_var[c];
        }
    }
}

/// Batch norm forward that also updates running statistics in train mode.
pub fn batchnorm_forward(p: &mut BatchNormParams, x: &Matrix, mode: Mode) -> Result<Matrix> {
    let (y, cache) = p.forward(x, mode)?;
    p.update_running(&cache);
    Ok(y)
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Passes `dy` where the pre-activation was positive.
fn relu_backward(pre: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for (d, &p) in dx.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Logistic function, evaluated without overflowing `exp`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_matrix(x: &Matrix) -> Matrix {
    x.map(sigmoid)
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Feature attention: per row, `A = softmax(W_a·z + b_a)` and `z' = A ⊙ z`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AttentionParams {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != weight.cols() || weight.rows() != bias.len() {
            return Err(Error::shape(format!(
                "attention needs a square weight matching its bias, got {:?} and {}",
                weight.shape(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            weight: Matrix::zeros(width, width),
            bias: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.bias.len()
    }

    /// Returns `(z', A)`.
    pub fn forward(&self, z: &Matrix) -> Result<(Matrix, Matrix)> {
        if z.cols() != self.width() {
            return Err(Error::shape(format!(
                "attention of width {} fed {} columns",
                self.width(),
                z.cols()
            )));
        }
        let mut a = z.matmul_transposed(&self.weight)?;
        for r in 0..a.rows() {
            let row = a.row_mut(r);
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
            softmax_in_place(row);
        }
        let out = a.hadamard(z)?;
        Ok((out, a))
    }

    pub fn backward(
        &self,
        z: &Matrix,
        a: &Matrix,
        dout: &Matrix,
        grad: &mut AttentionParams,
    ) -> Matrix {
        let (n, w) = z.shape();
        // Through z' = A ⊙ z: direct path dz = dout ⊙ A, and dA = dout ⊙ z.
        let mut dz = dout.hadamard(a).expect("same shape");
        let mut ds = Matrix::zeros(n, w);
        for r in 0..n {
            let ar = a.row(r);
            let da: Vec<f64> = dout
                .row(r)
                .iter()
                .zip(z.row(r))
                .map(|(d, zz)| d * zz)
                .collect();
            let inner = dot(ar, &da);
            for (c, s) in ds.row_mut(r).iter_mut().enumerate() {
                *s = ar[c] * (da[c] - inner);
            }
        }
        ds.transpose_matmul_into(z, &mut grad.weight);
        for r in 0..n {
            for (g, d) in grad.bias.iter_mut().zip(ds.row(r)) {
                *g += d;
            }
        }
        dz.add_assign(&ds.matmul(&self.weight).expect("square weight"));
        dz
    }
}

pub fn attention_forward(p: &AttentionParams, z: &Matrix) -> Result<Matrix> {
    p.forward(z).map(|(out, _)| out)
}

/// `y = ReLU(BN2(W2·ReLU(BN1(W1·x))) + shortcut(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlockParams {
    pub affine1: AffineParams,
    pub bn1: BatchNormParams,
    pub affine2: AffineParams,
    pub bn2: BatchNormParams,
    /// Present exactly when the block changes width.
    pub projection: Option<AffineParams>,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    bn1: BatchNormCache,
    n1: Matrix,
    h1: Matrix,
    bn2: BatchNormCache,
    pre: Matrix,
}

impl ResidualBlockParams {
    pub fn new(
        affine1: AffineParams,
        bn1: BatchNormParams,
        affine2: AffineParams,
        bn2: BatchNormParams,
        projection: Option<AffineParams>,
    ) -> Result<Self> {
        let (n_in, n_out) = (affine1.n_in(), affine2.n_out());
        let chain_ok = affine1.n_out() == bn1.width()
            && bn1.width() == affine2.n_in()
            && affine2.n_out() == bn2.width();
        if !chain_ok {
            return Err(Error::shape("residual block widths do not chain"));
        }
        match &projection {
            None if n_in != n_out => {
                return Err(Error::shape(format!(
                    "block maps {n_in} → {n_out} and needs a projection shortcut"
                )))
            }
            Some(_) if n_in == n_out => {
                return Err(Error::shape("projection given for an equal-width block"))
            }
            Some(p) if p.n_in() != n_in || p.n_out() != n_out => {
                return Err(Error::shape("projection shape does not match block"))
            }
            _ => {}
        }
        Ok(Self {
            affine1,
            bn1,
            affine2,
            bn2,
            projection,
        })
    }

    pub fn init(n_in: usize, n_out: usize, momentum: f64, eps: f64, rng: &mut SeededRng) -> Self {
        let affine1 = AffineParams::he_uniform(n_in, n_out, rng);
        let affine2 = AffineParams::he_uniform(n_out, n_out, rng);
        let projection = (n_in != n_out).then(|| AffineParams::he_uniform(n_in, n_out, rng));
        Self {
            affine1,
            bn1: BatchNormParams::new(n_out, momentum, eps),
            affine2,
            bn2: BatchNormParams::new(n_out, momentum, eps),
            projection,
        }
    }

    pub fn n_in(&self) -> usize {
        self.affine1.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.affine2.n_out()
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, BlockCache)> {
        let a1 = self.affine1.forward(x)?;
        let (n1, bn1) = self.bn1.forward(&a1, mode)?;
        let h1 = relu(&n1);
        let a2 = self.affine2.forward(&h1)?;
        let (n2, bn2) = self.bn2.forward(&a2, mode)?;
        let shortcut = match &self.projection {
            Some(p) => p.forward(x)?,
            None => x.clone(),
        };
        let pre = n2.add(&shortcut)?;
        let y = relu(&pre);
        Ok((
            y,
            BlockCache {
                bn1,
                n1,
                h1,
                bn2,
                pre,
            },
        ))
    }

    pub fn backward(
        &self,
        x: &Matrix,
        cache: &BlockCache,
        dy: &Matrix,
        grad: &mut ResidualBlockParams,
    ) -> Matrix {
        let dpre = relu_backward(&cache.pre, dy);
        let mut dx = match (&self.projection, grad.projection.as_mut()) {
            (Some(p), Some(gp)) => p.backward(x, &dpre, gp),
            _ => dpre.clone(),
        };
        let da2 = self.bn2.backward(&cache.bn2, &dpre, &mut grad.bn2);
        let dh1 = self.affine2.backward(&cache.h1, &da2, &mut grad.affine2);
        let dn1 = relu_backward(&cache.n1, &dh1);
        let da1 = self.bn1.backward(&cache.bn1, &dn1, &mut grad.bn1);
        dx.add_assign(&self.affine1.backward(x, &da1, &mut grad.affine1));
        dx
    }

    pub(crate) fn update_running(&mut self, cache: &BlockCache) {
        self.bn1.update_running(&cache.bn1);
        self.bn2.update_running(&cache.bn2);
    }
}

pub fn residual_block_forward(p: &ResidualBlockParams, x: &Matrix, mode: Mode) -> Result<Matrix> {
    p.forward(x, mode).map(|(y, _)| y)
}
