//! Fully connected networks with optional batch normalization and
//! hand-written reverse-mode differentiation.
//!
//! Activations are laid out as `features x batch` matrices. Each hidden
//! block is `dense -> batch norm (optional) -> relu`; the head is a plain
//! dense layer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forward-pass mode. Training normalizes with minibatch statistics,
/// inference with the running averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    fn init<R: Rng>(inputs: usize, outputs: usize, bound: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self {
            weights: DMatrix::from_fn(outputs, inputs, |_, _| dist.sample(rng)),
            bias: DVector::from_fn(outputs, |_, _| dist.sample(rng)),
        }
    }

    fn apply(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.weights * input;
        for mut col in out.column_iter_mut() {
            col += &self.bias;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub scale: DVector<f64>,
    pub shift: DVector<f64>,
    pub running_mean: DVector<f64>,
    pub running_var: DVector<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            scale: DVector::from_element(width, 1.0),
            shift: DVector::zeros(width),
            running_mean: DVector::zeros(width),
            running_var: DVector::from_element(width, 1.0),
            momentum: 0.01,
            eps: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub dense: Dense,
    pub norm: Option<BatchNorm>,
}

/// Network parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub name: String,
    pub hidden: Vec<HiddenLayer>,
    pub head: Dense,
}

struct NormCache {
    normalized: DMatrix<f64>,
    inv_std: DVector<f64>,
    mean: DVector<f64>,
    var: DVector<f64>,
    mode: Mode,
}

struct LayerCache {
    input: DMatrix<f64>,
    norm: Option<NormCache>,
    activated: DMatrix<f64>,
}

/// Intermediate values of a forward pass needed by [`Mlp::backward`].
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    head_input: DMatrix<f64>,
}

/// Gradients in the same order as [`Mlp::tensors_mut`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub tensors: Vec<Vec<f64>>,
}

impl Grads {
    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }
}

impl Mlp {
    /// Build a network. Hidden layers use fan-in uniform initialization;
    /// the head uses `head_bound`.
    pub fn new<R: Rng>(
        name: impl Into<String>,
        inputs: usize,
        hidden_widths: &[usize],
        outputs: usize,
        batch_norm: bool,
        head_bound: f64,
        rng: &mut R,
    ) -> Self {
        let mut hidden = Vec::with_capacity(hidden_widths.len());
        let mut fan_in = inputs;
        for &width in hidden_widths {
            hidden.push(HiddenLayer {
                dense: Dense::init(fan_in, width, 1.0 / (fan_in as f64).sqrt(), rng),
                norm: batch_norm.then(|| BatchNorm::new(width)),
            });
            fan_in = width;
        }
        Self { name: name.into(), hidden, head: Dense::init(fan_in, outputs, head_bound, rng) }
    }

    pub fn input_size(&self) -> usize {
        self.hidden.first().map_or(self.head.weights.ncols(), |l| l.dense.weights.ncols())
    }

    pub fn output_size(&self) -> usize {
        self.head.weights.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.dense.weights.nrows()).collect()
    }

    /// Forward pass over a `inputs x batch` matrix.
    pub fn forward(&self, input: &DMatrix<f64>, mode: Mode) -> Result<(DMatrix<f64>, ForwardCache)> {
        if input.nrows() != self.input_size() {
            return Err(Error::Shape(format!(
                "{}: input has {} rows, expected {}",
                self.name,
                input.nrows(),
                self.input_size()
            )));
        }
        let batch = input.ncols();
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut current = input.clone();
        for (i, layer) in self.hidden.iter().enumerate() {
            let pre = layer.dense.apply(&current);
            let (post_norm, norm) = match &layer.norm {
                None => (pre, None),
                Some(bn) => {
                    let (mean, var) = match mode {
                        Mode::Train => batch_moments(&pre),
                        Mode::Inference => (bn.running_mean.clone(), bn.running_var.clone()),
                    };
                    let inv_std = var.map(|v| 1.0 / (v + bn.eps).sqrt());
                    let mut normalized = pre;
                    for mut col in normalized.column_iter_mut() {
                        col -= &mean;
                        col.component_mul_assign(&inv_std);
                    }
                    let mut out = normalized.clone();
                    for mut col in out.column_iter_mut() {
                        col.component_mul_assign(&bn.scale);
                        col += &bn.shift;
                    }
                    (out, Some(NormCache { normalized, inv_std, mean, var, mode }))
                }
            };
            let activated = post_norm.map(|v| v.max(0.0));
            if activated.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFailure { layer: format!("{}.hidden[{i}]", self.name) });
            }
            layers.push(LayerCache { input: current, norm, activated: activated.clone() });
            current = activated;
        }
        let out = self.head.apply(&current);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure { layer: format!("{}.head", self.name) });
        }
        debug_assert_eq!(out.ncols(), batch);
        Ok((out, ForwardCache { layers, head_input: current }))
    }

    /// Fold the minibatch statistics of a training pass into the running
    /// averages.
    pub fn commit_running_stats(&mut self, cache: &ForwardCache) {
        for (layer, lc) in self.hidden.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(nc)) = (layer.norm.as_mut(), lc.norm.as_ref()) {
                if nc.mode != Mode::Train {
                    continue;
                }
                let m = bn.momentum;
                bn.running_mean = &bn.running_mean * (1.0 - m) + &nc.mean * m;
                bn.running_var = &bn.running_var * (1.0 - m) + &nc.var * m;
            }
        }
    }

    /// Reverse pass. Returns parameter gradients and the gradient with
    /// respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &DMatrix<f64>) -> (Grads, DMatrix<f64>) {
        let mut tensors: Vec<Vec<f64>> = Vec::new();
        let head_w = grad_out * cache.head_input.transpose();
        let head_b: DVector<f64> = grad_out.column_sum();
        let mut grad = self.head.weights.transpose() * grad_out;

        let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.hidden.len());
        for (layer, lc) in self.hidden.iter().zip(&cache.layers).rev() {
            // relu
            grad.zip_apply(&lc.activated, |g, a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            let mut layer_tensors = Vec::new();
            let grad_pre = match (&layer.norm, &lc.norm) {
                (Some(bn), Some(nc)) => {
                    let dshift: DVector<f64> = grad.column_sum();
                    let dscale: DVector<f64> = grad.component_mul(&nc.normalized).column_sum();
                    let mut dnorm = grad.clone();
                    for mut col in dnorm.column_iter_mut() {
                        col.component_mul_assign(&bn.scale);
                    }
                    let dpre = match nc.mode {
                        Mode::Inference => {
                            for mut col in dnorm.column_iter_mut() {
                                col.component_mul_assign(&nc.inv_std);
                            }
                            dnorm
                        }
                        Mode::Train => {
                            let n = dnorm.ncols() as f64;
                            let sum_d: DVector<f64> = dnorm.column_sum();
                            let sum_dx: DVector<f64> =
                                dnorm.component_mul(&nc.normalized).column_sum();
                            let mut dpre = dnorm;
                            for (mut col, xhat) in
                                dpre.column_iter_mut().zip(nc.normalized.column_iter())
                            {
                                for i in 0..col.len() {
                                    col[i] = nc.inv_std[i] / n
                                        * (n * col[i] - sum_d[i] - xhat[i] * sum_dx[i]);
                                }
                            }
                            dpre
                        }
                    };
                    layer_tensors.push(dscale.as_slice().to_vec());
                    layer_tensors.push(dshift.as_slice().to_vec());
                    dpre
                }
                _ => grad,
            };
            let dw = &grad_pre * lc.input.transpose();
            let db: DVector<f64> = grad_pre.column_sum();
            layer_tensors.insert(0, db.as_slice().to_vec());
            layer_tensors.insert(0, dw.as_slice().to_vec());
            per_layer.push(layer_tensors);
            grad = layer.dense.weights.transpose() * &grad_pre;
        }
        for layer_tensors in per_layer.into_iter().rev() {
            tensors.extend(layer_tensors);
        }
        tensors.push(head_w.as_slice().to_vec());
        tensors.push(head_b.as_slice().to_vec());
        (Grads { tensors }, grad)
    }

    /// Mutable views of every trainable tensor, in gradient order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.hidden {
            out.push(layer.dense.weights.as_mut_slice());
            out.push(layer.dense.bias.as_mut_slice());
            if let Some(bn) = layer.norm.as_mut() {
                out.push(bn.scale.as_mut_slice());
                out.push(bn.shift.as_mut_slice());
            }
        }
        out.push(self.head.weights.as_mut_slice());
        out.push(self.head.bias.as_mut_slice());
        out
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for layer in &self.hidden {
            out.push(layer.dense.weights.len());
            out.push(layer.dense.bias.len());
            if let Some(bn) = &layer.norm {
                out.push(bn.scale.len());
                out.push(bn.shift.len());
            }
        }
        out.push(self.head.weights.len());
        out.push(self.head.bias.len());
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensor_sizes().iter().sum()
    }

    /// Flat copy of all trainable parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut copy = self.clone();
        copy.tensors_mut().into_iter().flat_map(|t| t.to_vec()).collect()
    }

    /// Overwrite the trainable parameter with flat index `idx`.
    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for t in self.tensors_mut() {
            if idx < t.len() {
                t[idx] = value;
                return;
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }

    /// `self <- (1 - tau) self + tau other`, trainable parameters and running
    /// statistics alike.
    pub fn soft_update(&mut self, other: &Mlp, tau: f64) {
        let mut src = other.clone();
        for (dst, src) in self.tensors_mut().into_iter().zip(src.tensors_mut()) {
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        }
        for (dst, src) in self.hidden.iter_mut().zip(&other.hidden) {
            if let (Some(d), Some(s)) = (dst.norm.as_mut(), src.norm.as_ref()) {
                d.running_mean = &d.running_mean * (1.0 - tau) + &s.running_mean * tau;
                d.running_var = &d.running_var * (1.0 - tau) + &s.running_var * tau;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        let mut copy = self.clone();
        copy.tensors_mut().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn batch_moments(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = m.ncols() as f64;
    let mean: DVector<f64> = m.column_sum() / n;
    let mut var = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        for i in 0..col.len() {
            let d = col[i] - mean[i];
            var[i] += d * d;
        }
    }
    var /= n;
    (mean, var)
}

/// Adam optimizer state for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let sizes = net.tensor_sizes();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Descend along `grads` (pass negated gradients to ascend).
    pub fn apply(&mut self, net: &mut Mlp, grads: &Grads) {
        if self.learning_rate == 0.0 {
            return;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((param, g), m), v) in net
            .tensors_mut()
            .into_iter()
            .zip(&grads.tensors)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..param.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                param[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Component};

    fn loss_and_grads(net: &Mlp, x: &DMatrix<f64>, target: &DMatrix<f64>, mode: Mode) -> (f64, Grads) {
        let (out, cache) = net.forward(x, mode).unwrap();
        let diff = &out - target;
        let loss = diff.norm_squared() / 2.0;
        let (grads, _) = net.backward(&cache, &diff);
        (loss, grads)
    }

    fn check_grads(batch_norm: bool, mode: Mode) {
        let mut rng = stream(5, Component::Generic, 0);
        let net = Mlp::new("t", 3, &[4, 5], 2, batch_norm, 0.5, &mut rng);
        let x = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let target = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
        let (_, grads) = loss_and_grads(&net, &x, &target, mode);
        let analytic = grads.flatten();
        let base = net.flat_params();
        let h = 1e-5;
        let mut numeric = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = net.clone();
            plus.set_param(i, base[i] + h);
            let mut minus = net.clone();
            minus.set_param(i, base[i] - h);
            let lp = loss_and_grads(&plus, &x, &target, mode).0;
            let lm = loss_and_grads(&minus, &x, &target, mode).0;
            numeric.push((lp - lm) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-6, "relative error {}", diff / scale);
    }

    #[test]
    fn gradients_plain() {
        check_grads(false, Mode::Train);
    }

    #[test]
    fn gradients_batch_norm_train() {
        check_grads(true, Mode::Train);
    }

    #[test]
    fn gradients_batch_norm_inference() {
        check_grads(true, Mode::Inference);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = stream(6, Component::Generic, 0);
        let net = Mlp::new("t", 3, &[6], 1, true, 0.5, &mut rng);
        let x = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let (out, cache) = net.forward(&x, Mode::Train).unwrap();
        let ones = DMatrix::from_element(1, 4, 1.0);
        let (_, gx) = net.backward(&cache, &ones);
        let total = |m: &DMatrix<f64>| net.forward(m, Mode::Train).unwrap().0.sum();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..4 {
                let mut p = x.clone();
                p[(i, j)] += h;
                let mut m = x.clone();
                m[(i, j)] -= h;
                let fd = (total(&p) - total(&m)) / (2.0 * h);
                assert!((fd - gx[(i, j)]).abs() < 1e-6, "{fd} vs {}", gx[(i, j)]);
            }
        }
        assert_eq!(out.ncols(), 4);
    }

    #[test]
    fn adam_zero_rate_is_noop() {
        let mut rng = stream(1, Component::Generic, 0);
        let mut net = Mlp::new("t", 2, &[3], 1, false, 0.1, &mut rng);
        let before = net.clone();
        let mut adam = Adam::new(&net, 0.0);
        let grads = Grads { tensors: net.tensor_sizes().iter().map(|&n| vec![1.0; n]).collect() };
        adam.apply(&mut net, &grads);
        assert_eq!(net, before);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut rng = stream(1, Component::Generic, 0);
        let net = Mlp::new("t", 2, &[3], 1, false, 0.1, &mut rng);
        assert!(matches!(
            net.forward(&DMatrix::zeros(3, 1), Mode::Train),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn running_stats_follow_batches() {
        let mut rng = stream(2, Component::Generic, 0);
        let mut net = Mlp::new("t", 1, &[2], 1, true, 0.1, &mut rng);
        let x = DMatrix::from_fn(1, 8, |_, j| j as f64);
        for _ in 0..2000 {
            let (_, cache) = net.forward(&x, Mode::Train).unwrap();
            net.commit_running_stats(&cache);
        }
        let (train, _) = net.forward(&x, Mode::Train).unwrap();
        let (infer, _) = net.forward(&x, Mode::Inference).unwrap();
        assert!((train - infer).abs().max() < 1e-2);
    }
}
