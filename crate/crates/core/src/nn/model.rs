//! The attention-augmented residual network.
//!
//! ```text
//! x ─ input affine ─ block₀ ─ [attn] ─ block₁ ─ [attn] ─ … ─ [attn] ─ output affine ─ logit
//! ```
//!
//! Where attention sits is controlled by [`AttentionPlacement`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::layers::{
    AffineParams, AttentionParams, BatchNormParams, BlockCache, Mode, ResidualBlockParams,
};
use crate::nn::loss::Objective;
use crate::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionPlacement {
    None,
    /// One attention layer after the last residual block.
    Final,
    /// One attention layer after every residual block.
    EveryBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    /// Width produced by the input affine layer.
    pub input_width: usize,
    /// Output width of each residual block, in order.
    pub block_widths: Vec<usize>,
    pub attention: AttentionPlacement,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub init_seed: u64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_width: 64,
            block_widths: vec![64; 3],
            attention: AttentionPlacement::Final,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            init_seed: 42,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.block_widths.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::config("model.bn_eps must be positive"));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::config("model.bn_momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// All network parameters plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub input: AffineParams,
    pub blocks: Vec<ResidualBlockParams>,
    pub attention: Vec<AttentionParams>,
    pub output: AffineParams,
}

/// A named view of one parameter tensor.
#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
    /// False for batch-norm running statistics.
    pub trainable: bool,
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
    pub trainable: bool,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    input: Matrix,
    blocks: Vec<(Matrix, BlockCache)>,
    attention: Vec<(Matrix, Matrix)>,
    head_in: Matrix,
    rows: usize,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

impl ModelParams {
    /// Seeded He-uniform initialization; batch norm starts at γ=1, β=0.
    pub fn init(n_inputs: usize, arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        if n_inputs == 0 {
            return Err(Error::config("model needs at least one input feature"));
        }
        let mut rng = seeded::rng(arch.init_seed, 0);
        let input = AffineParams::he_uniform(n_inputs, arch.input_width, &mut rng);
        let mut blocks = Vec::with_capacity(arch.block_widths.len());
        let mut attention = Vec::new();
        let mut width = arch.input_width;
        for &w in &arch.block_widths {
            blocks.push(ResidualBlockParams::init(
                width,
                w,
                arch.bn_momentum,
                arch.bn_eps,
                &mut rng,
            ));
            width = w;
            if arch.attention == AttentionPlacement::EveryBlock {
                attention.push(attention_init(w, &mut rng));
            }
        }
        if arch.attention == AttentionPlacement::Final {
            attention.push(attention_init(width, &mut rng));
        }
        let output = AffineParams::he_uniform(width, 1, &mut rng);
        Ok(Self {
            arch: arch.clone(),
            input,
            blocks,
            attention,
            output,
        })
    }

    /// Same structure with every tensor zeroed; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn n_inputs(&self) -> usize {
        self.input.n_in()
    }

    pub fn n_trainable(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.data.len())
            .sum()
    }

    /// Checks that widths chain from input to output.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.input.n_out();
        if self.input.bias.len() != width {
            return Err(Error::shape("input layer bias length"));
        }
        let mut attn = self.attention.iter();
        let per_block = self.arch.attention == AttentionPlacement::EveryBlock;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.n_in() != width {
                return Err(Error::shape(format!(
                    "block {i} expects width {} but receives {width}",
                    b.n_in()
                )));
            }
            width = b.n_out();
            if per_block {
                match attn.next() {
                    Some(a) if a.width() == width => {}
                    _ => {
                        return Err(Error::shape(format!(
                            "attention after block {i} is missing or mis-sized"
                        )))
                    }
                }
            }
        }
        if self.arch.attention == AttentionPlacement::Final {
            match attn.next() {
                Some(a) if a.width() == width => {}
                _ => {
                    return Err(Error::shape(
                        "final attention layer is missing or mis-sized",
                    ))
                }
            }
        }
        if attn.next().is_some() {
            return Err(Error::shape(
                "more attention layers than the placement calls for",
            ));
        }
        if self.output.n_in() != width || self.output.n_out() != 1 {
            return Err(Error::shape(format!(
                "output layer must map {width} → 1, got {} → {}",
                self.output.n_in(),
                self.output.n_out()
            )));
        }
        Ok(())
    }

    /// Logits for every row, plus the cache needed by [`ModelParams::backward`].
    /// Running statistics are not touched; see [`ModelParams::update_running_stats`].
    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
        if x.cols() != self.n_inputs() {
            return Err(Error::shape(format!(
                "model expects {} features, got {}",
                self.n_inputs(),
                x.cols()
            )));
        }
        let stem = self.input.forward(x)?;
        let mut h = stem;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut attention = Vec::with_capacity(self.attention.len());
        let per_block = self.arch.attention == AttentionPlacement::EveryBlock;
        for (i, b) in self.blocks.iter().enumerate() {
            let (y, cache) = b.forward(&h, mode)?;
            blocks.push((h, cache));
            h = y;
            if per_block {
                let (z, a) = self.attention[i].forward(&h)?;
                attention.push((h, a));
                h = z;
            }
        }
        if self.arch.attention == AttentionPlacement::Final {
            let (z, a) = self.attention[0].forward(&h)?;
            attention.push((h, a));
            h = z;
        }
        let logits = self.output.forward(&h)?.into_vec();
        Ok((
            logits,
            ForwardCache {
                mode,
                input: x.clone(),
                blocks,
                attention,
                head_in: h,
                rows: x.rows(),
            },
        ))
    }

    pub fn logits(&self, x: &Matrix, mode: Mode) -> Result<Vec<f64>> {
        self.forward(x, mode).map(|(l, _)| l)
    }

    /// Gradients of every trainable tensor given `∂L/∂logit` per row.
    /// Running-statistic slots of the result are zero.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64]) -> Result<ModelParams> {
        if dlogits.len() != cache.rows {
            return Err(Error::shape(format!(
                "{} logit gradients for a batch of {}",
                dlogits.len(),
                cache.rows
            )));
        }
        let mut grad = self.zeros_like();
        let dy = Matrix::from_vec(cache.rows, 1, dlogits.to_vec())?;
        let mut dh = self.output.backward(&cache.head_in, &dy, &mut grad.output);

        let per_block = self.arch.attention == AttentionPlacement::EveryBlock;
        if self.arch.attention == AttentionPlacement::Final {
            let (z, a) = &cache.attention[0];
            dh = self.attention[0].backward(z, a, &dh, &mut grad.attention[0]);
        }
        for i in (0..self.blocks.len()).rev() {
            if per_block {
                let (z, a) = &cache.attention[i];
                dh = self.attention[i].backward(z, a, &dh, &mut grad.attention[i]);
            }
            let (x, bc) = &cache.blocks[i];
            dh = self.blocks[i].backward(x, bc, &dh, &mut grad.blocks[i]);
        }
        self.input.backward(&cache.input, &dh, &mut grad.input);
        Ok(grad)
    }

    /// Forward, loss, and backward in one go. Returns `(loss, grads, cache)`.
    pub fn loss_and_grad(
        &self,
        x: &Matrix,
        labels: &[u8],
        objective: &Objective<'_>,
        mode: Mode,
    ) -> Result<(f64, ModelParams, ForwardCache)> {
        let (logits, cache) = self.forward(x, mode)?;
        let loss = objective.evaluate(&logits, labels)?;
        let grads = self.backward(&cache, &loss.grad)?;
        Ok((loss.value, grads, cache))
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (b, (_, bc)) in self.blocks.iter_mut().zip(&cache.blocks) {
            b.update_running(bc);
        }
    }

    /// Every tensor in a fixed order: trainable parameters and running stats.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        visit(self, &mut |name, shape, data, trainable| {
            out.push(TensorRef {
                name,
                shape,
                data,
                trainable,
            })
        });
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        visit_mut(self, &mut |name, shape, data, trainable| {
            out.push(TensorMut {
                name,
                shape,
                data,
                trainable,
            })
        });
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<TensorMut<'_>> {
        self.tensors_mut()
            .into_iter()
            .filter(|t| t.trainable)
            .collect()
    }
}

fn attention_init(width: usize, rng: &mut seeded::SeededRng) -> AttentionParams {
    let a = AffineParams::he_uniform(width, width, rng);
    AttentionParams {
        weight: a.weight,
        bias: a.bias,
    }
}

fn visit<'a>(m: &'a ModelParams, f: &mut dyn FnMut(String, Vec<usize>, &'a [f64], bool)) {
    fn aff<'a>(
        f: &mut dyn FnMut(String, Vec<usize>, &'a [f64], bool),
        p: &str,
        a: &'a AffineParams,
    ) {
        let shape = vec![a.weight.rows(), a.weight.cols()];
        f(format!("{p}.weight"), shape, a.weight.as_slice(), true);
        f(format!("{p}.bias"), vec![a.bias.len()], &a.bias, true);
    }
    fn bn<'a>(
        f: &mut dyn FnMut(String, Vec<usize>, &'a [f64], bool),
        p: &str,
        b: &'a BatchNormParams,
    ) {
        let w = vec![b.width()];
        f(format!("{p}.gamma"), w.clone(), &b.gamma, true);
        f(format!("{p}.beta"), w.clone(), &b.beta, true);
        f(
            format!("{p}.running_mean"),
            w.clone(),
            &b.running_mean,
            false,
        );
        f(format!("{p}.running_var"), w, &b.running_var, false);
    }
    aff(f, "input", &m.input);
    for (i, b) in m.blocks.iter().enumerate() {
        aff(f, &format!("blocks.{i}.affine1"), &b.affine1);
        bn(f, &format!("blocks.{i}.bn1"), &b.bn1);
        aff(f, &format!("blocks.{i}.affine2"), &b.affine2);
        bn(f, &format!("blocks.{i}.bn2"), &b.bn2);
        if let Some(p) = &b.projection {
            aff(f, &format!("blocks.{i}.projection"), p);
        }
    }
    for (i, a) in m.attention.iter().enumerate() {
        let shape = vec![a.weight.rows(), a.weight.cols()];
        f(
            format!("attention.{i}.weight"),
            shape,
            a.weight.as_slice(),
            true,
        );
        f(
            format!("attention.{i}.bias"),
            vec![a.bias.len()],
            &a.bias,
            true,
        );
    }
    aff(f, "output", &m.output);
}

fn visit_mut<'a>(
    m: &'a mut ModelParams,
    f: &mut dyn FnMut(String, Vec<usize>, &'a mut [f64], bool),
) {
    fn aff<'a>(
        f: &mut dyn FnMut(String, Vec<usize>, &'a mut [f64], bool),
        p: &str,
        a: &'a mut AffineParams,
    ) {
        let shape = vec![a.weight.rows(), a.weight.cols()];
        f(format!("{p}.weight"), shape, a.weight.as_mut_slice(), true);
        f(format!("{p}.bias"), vec![a.bias.len()], &mut a.bias, true);
    }
    fn bn<'a>(
        f: &mut dyn FnMut(String, Vec<usize>, &'a mut [f64], bool),
        p: &str,
        b: &'a mut BatchNormParams,
    ) {
        let w = vec![b.gamma.len()];
        f(format!("{p}.gamma"), w.clone(), &mut b.gamma, true);
        f(format!("{p}.beta"), w.clone(), &mut b.beta, true);
        f(
            format!("{p}.running_mean"),
            w.clone(),
            &mut b.running_mean,
            false,
        );
        f(format!("{p}.running_var"), w, &mut b.running_var, false);
    }
    aff(f, "input", &mut m.input);
    for (i, b) in m.blocks.iter_mut().enumerate() {
        aff(f, &format!("blocks.{i}.affine1"), &mut b.affine1);
        bn(f, &format!("blocks.{i}.bn1"), &mut b.bn1);
        aff(f, &format!("blocks.{i}.affine2"), &mut b.affine2);
        bn(f, &format!("blocks.{i}.bn2"), &mut b.bn2);
        if let Some(p) = b.projection.as_mut() {
            aff(f, &format!("blocks.{i}.projection"), p);
        }
    }
    for (i, a) in m.attention.iter_mut().enumerate() {
        let shape = vec![a.weight.rows(), a.weight.cols()];
        f(
            format!("attention.{i}.weight"),
            shape,
            a.weight.as_mut_slice(),
            true,
        );
        f(
            format!("attention.{i}.bias"),
            vec![a.bias.len()],
            &mut a.bias,
            true,
        );
    }
    aff(f, "output", &mut m.output);
}

/// Holds the last forward cache so gradients can be requested separately.
#[derive(Debug, Default)]
pub struct Tape {
    cache: Option<ForwardCache>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, model: &ModelParams, x: &Matrix, mode: Mode) -> Result<Vec<f64>> {
        let (logits, cache) = model.forward(x, mode)?;
        self.cache = Some(cache);
        Ok(logits)
    }

    /// Backward through the most recent forward pass; consumes it.
    pub fn backward(&mut self, model: &ModelParams, dlogits: &[f64]) -> Result<ModelParams> {
        let cache = self.cache.take().ok_or(Error::NoForward)?;
        model.backward(&cache, dlogits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::{LossKind, Objective};

    fn small_arch(attention: AttentionPlacement) -> ArchConfig {
        ArchConfig {
            input_width: 6,
            block_widths: vec![6, 4],
            attention,
            init_seed: 5,
            ..Default::default()
        }
    }

    fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::Rng;
        let mut rng = seeded::rng(seed, 9);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn init_is_valid_and_seeded() {
        for placement in [
            AttentionPlacement::None,
            AttentionPlacement::Final,
            AttentionPlacement::EveryBlock,
        ] {
            let m = ModelParams::init(3, &small_arch(placement)).unwrap();
            m.validate().unwrap();
            assert_eq!(m, ModelParams::init(3, &small_arch(placement)).unwrap());
        }
        let m = ModelParams::init(3, &small_arch(AttentionPlacement::EveryBlock)).unwrap();
        assert_eq!(m.attention.len(), 2);
        assert!(m.blocks[1].projection.is_some() && m.blocks[0].projection.is_none());
        assert!(ModelParams::init(0, &small_arch(AttentionPlacement::None)).is_err());
    }

    #[test]
    fn tensor_listing_is_complete_and_unique() {
        let mut m = ModelParams::init(3, &small_arch(AttentionPlacement::Final)).unwrap();
        let names: Vec<String> = m.tensors().into_iter().map(|t| t.name).collect();
        let mut uniq = names.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), names.len());
        let mut_names: Vec<String> = m.tensors_mut().into_iter().map(|t| t.name).collect();
        assert_eq!(names, mut_names);
        assert!(names.contains(&"blocks.1.projection.weight".to_string()));
        // input 3→6: 24, block0: 2·42 + 4·6·... counted directly below
        let expect: usize = m
            .tensors()
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.shape.iter().product::<usize>())
            .sum();
        assert_eq!(m.n_trainable(), expect);
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let m = ModelParams::init(3, &small_arch(AttentionPlacement::Final)).unwrap();
        let x = batch(7, 3, 1);
        let a = m.logits(&x, Mode::Train).unwrap();
        let b = m.logits(&x, Mode::Train).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(a.iter().all(|v| v.is_finite()));
        assert!(m.logits(&batch(2, 4, 1), Mode::Infer).is_err());
    }

    #[test]
    fn zero_output_layer_gives_zero_bias_gradient_on_balanced_batch() {
        let mut m = ModelParams::init(3, &small_arch(AttentionPlacement::Final)).unwrap();
        m.output = AffineParams::zeros(4, 1);
        let x = batch(6, 3, 2);
        let y = [1, 0, 1, 0, 1, 0];
        let (_, g, _) = m
            .loss_and_grad(&x, &y, &Objective::plain(LossKind::Bce, 1.0), Mode::Train)
            .unwrap();
        assert_eq!(g.output.bias, vec![0.0]);
        assert!(g
            .tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn tape_requires_forward() {
        let m = ModelParams::init(3, &small_arch(AttentionPlacement::None)).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(tape.backward(&m, &[0.0]), Err(Error::NoForward)));
        let x = batch(4, 3, 3);
        tape.forward(&m, &x, Mode::Train).unwrap();
        assert!(tape.backward(&m, &[0.1; 4]).is_ok());
        assert!(matches!(
            tape.backward(&m, &[0.1; 4]),
            Err(Error::NoForward)
        ));
    }

    #[test]
    fn running_stats_update_only_in_train_mode() {
        let mut m = ModelParams::init(3, &small_arch(AttentionPlacement::None)).unwrap();
        let x = batch(8, 3, 4);
        let (_, cache) = m.forward(&x, Mode::Infer).unwrap();
        let before = m.clone();
        m.update_running_stats(&cache);
        assert_eq!(m, before);
        let (_, cache) = m.forward(&x, Mode::Train).unwrap();
        m.update_running_stats(&cache);
        assert_ne!(
            m.blocks[0].bn1.running_mean,
            before.blocks[0].bn1.running_mean
        );
    }

    #[test]
    fn infer_mode_rows_are_independent() {
        let m = ModelParams::init(3, &small_arch(AttentionPlacement::EveryBlock)).unwrap();
        let x = batch(5, 3, 6);
        let all = m.logits(&x, Mode::Infer).unwrap();
        for i in 0..5 {
            let one = m.logits(&x.select_rows(&[i]), Mode::Infer).unwrap();
            assert_eq!(one[0].to_bits(), all[i].to_bits());
        }
    }
}
