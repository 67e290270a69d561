use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
}

impl ParamKind {
    pub fn is_batch_norm(self) -> bool {
        matches!(self, ParamKind::BnScale | ParamKind::BnShift)
    }
}

/// A trainable tensor with its gradient accumulator and SGD momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub kind: ParamKind,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl Param {
    pub fn new(kind: ParamKind, value: Vec<f64>) -> Self {
        let n = value.len();
        Self { kind, value, grad: vec![0.0; n], velocity: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Batch-norm statistics mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BnMode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates.
    #[default]
    Eval,
    /// Normalize with batch statistics, leave running estimates untouched.
    Recompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => libm::tanh(v),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub(crate) fn forward(self, x: &Matrix) -> Matrix {
        x.map(|v| self.apply(v))
    }

    pub(crate) fn backward(self, output: &Matrix, grad: &Matrix) -> Matrix {
        output
            .zip_map(grad, |y, g| g * self.derivative_from_output(y))
            .expect("activation cache matches gradient shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    pub weight: Param,
    pub bias: Option<Param>,
}

impl AffineLayer {
    /// Uniform init with variance `2 / in_dim`; bias starts at zero.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Self {
        // U(-a, a) has variance a²/3
        let bound = libm::sqrt(6.0 / in_dim as f64);
        let weight = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Self::from_parts(in_dim, out_dim, weight, bias.then(|| vec![0.0; out_dim]))
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Option<Vec<f64>>) -> Self {
        assert_eq!(weight.len(), in_dim * out_dim, "weight length");
        if let Some(b) = &bias {
            assert_eq!(b.len(), out_dim, "bias length");
        }
        Self {
            in_dim,
            out_dim,
            weight: Param::new(ParamKind::Weight, weight),
            bias: bias.map(|b| Param::new(ParamKind::Bias, b)),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim {
            return Err(shape_err!("affine expects {} inputs, got {}", self.in_dim, x.cols()));
        }
        let mut out = Matrix::zeros(x.rows(), self.out_dim);
        let w = &self.weight.value;
        for i in 0..x.rows() {
            let xi = x.row(i);
            let oi = out.row_mut(i);
            for (o, (wr, oo)) in w.chunks_exact(self.in_dim).zip(oi.iter_mut()).enumerate() {
                let mut acc = super::matrix::dot(wr, xi);
                if let Some(b) = &self.bias {
                    acc += b.value[o];
                }
                *oo = acc;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, input: &Matrix, grad_out: &Matrix) -> Matrix {
        let n = self.in_dim;
        let mut grad_in = Matrix::zeros(input.rows(), n);
        for r in 0..input.rows() {
            let xr = input.row(r);
            let gr = grad_out.row(r);
            for (o, &g) in gr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let gw = &mut self.weight.grad[o * n..(o + 1) * n];
                for (gwi, &xi) in gw.iter_mut().zip(xr) {
                    *gwi += g * xi;
                }
                let wr = &self.weight.value[o * n..(o + 1) * n];
                for (gi, &wi) in grad_in.row_mut(r).iter_mut().zip(wr) {
                    *gi += g * wi;
                }
                if let Some(b) = &mut self.bias {
                    b.grad[o] += g;
                }
            }
        }
        grad_in
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub features: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub stat_momentum: f64,
}

/// What a batch-norm forward needs to remember for its backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Matrix,
    inv_std: Vec<f64>,
    /// `true` when the batch statistics were used (gradient flows through them).
    batch_stats: bool,
}

impl BatchNormLayer {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(features: usize) -> Self {
        Self {
            features,
            gamma: Param::new(ParamKind::BnScale, vec![1.0; features]),
            beta: Param::new(ParamKind::BnShift, vec![0.0; features]),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            eps: Self::DEFAULT_EPS,
            stat_momentum: Self::DEFAULT_MOMENTUM,
        }
    }

    /// Normalizes `x`. Batches with a single row fall back to the running
    /// statistics in every mode since their variance is degenerate.
    pub fn forward(&mut self, x: &Matrix, mode: BnMode) -> Result<(Matrix, BnCache)> {
        if x.cols() != self.features {
            return Err(shape_err!("batch norm expects {} features, got {}", self.features, x.cols()));
        }
        let n = x.rows();
        let use_batch = mode != BnMode::Eval && n >= 2;
        let (mean, var) = if use_batch {
            batch_moments(x)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        if use_batch && mode == BnMode::Train {
            let m = self.stat_momentum;
            let unbias = n as f64 / (n as f64 - 1.0);
            for f in 0..self.features {
                self.running_mean[f] = (1.0 - m) * self.running_mean[f] + m * mean[f];
                self.running_var[f] = (1.0 - m) * self.running_var[f] + m * var[f] * unbias;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.eps)).collect();
        let mut x_hat = Matrix::zeros(n, self.features);
        let mut out = Matrix::zeros(n, self.features);
        for i in 0..n {
            for f in 0..self.features {
                let h = (x[(i, f)] - mean[f]) * inv_std[f];
                x_hat[(i, f)] = h;
                out[(i, f)] = self.gamma.value[f] * h + self.beta.value[f];
            }
        }
        Ok((out, BnCache { x_hat, inv_std, batch_stats: use_batch }))
    }

    pub fn backward(&mut self, cache: &BnCache, grad_out: &Matrix) -> Matrix {
        let n = grad_out.rows();
        let nf = n as f64;
        let mut grad_in = Matrix::zeros(n, self.features);
        for f in 0..self.features {
            let mut sum_g = 0.0;
            let mut sum_gh = 0.0;
            for i in 0..n {
                let g = grad_out[(i, f)];
                sum_g += g;
                sum_gh += g * cache.x_hat[(i, f)];
            }
            self.gamma.grad[f] += sum_gh;
            self.beta.grad[f] += sum_g;
            let gamma = self.gamma.value[f];
            let s = cache.inv_std[f];
            for i in 0..n {
                let dh = grad_out[(i, f)] * gamma;
                grad_in[(i, f)] = if cache.batch_stats {
                    // d x_hat / d x through the batch mean and variance
                    s / nf * (nf * dh - gamma * sum_g - cache.x_hat[(i, f)] * gamma * sum_gh)
                } else {
                    dh * s
                };
            }
        }
        grad_in
    }
}

/// Per-feature mean and biased variance.
pub(crate) fn batch_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; x.cols()];
    for r in x.iter_rows() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Affine(AffineLayer),
    Act(Activation),
    BatchNorm(BatchNormLayer),
}

#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Affine { input: Matrix },
    Act { output: Matrix },
    BatchNorm(BnCache),
}

impl Layer {
    pub(crate) fn forward(&mut self, x: &Matrix, mode: BnMode) -> Result<(Matrix, LayerCache)> {
        match self {
            Layer::Affine(a) => Ok((a.forward(x)?, LayerCache::Affine { input: x.clone() })),
            Layer::Act(act) => {
                let y = act.forward(x);
                Ok((y.clone(), LayerCache::Act { output: y }))
            }
            Layer::BatchNorm(bn) => {
                let (y, c) = bn.forward(x, mode)?;
                Ok((y, LayerCache::BatchNorm(c)))
            }
        }
    }

    pub(crate) fn backward(&mut self, cache: &LayerCache, grad: &Matrix) -> Matrix {
        match (self, cache) {
            (Layer::Affine(a), LayerCache::Affine { input }) => a.backward(input, grad),
            (Layer::Act(act), LayerCache::Act { output }) => act.backward(output, grad),
            (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => bn.backward(c, grad),
            _ => unreachable!("layer cache recorded for a different layer kind"),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Affine(a) => core::iter::once(&a.weight).chain(a.bias.as_ref()).collect(),
            Layer::Act(_) => Vec::new(),
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Affine(a) => core::iter::once(&mut a.weight).chain(a.bias.as_mut()).collect(),
            Layer::Act(_) => Vec::new(),
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            Layer::Affine(a) => a.out_dim,
            _ => input_dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recompute_normalizes_two_point_batch() {
        let mut bn = BatchNormLayer::new(1);
        bn.eps = 0.0;
        let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let (y, _) = bn.forward(&x, BnMode::Recompute).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, 1.0]);
        assert_eq!(bn.running_mean, vec![0.0]);
        assert_eq!(bn.running_var, vec![1.0]);
    }

    #[test]
    fn train_mode_updates_running_stats_only() {
        let mut bn = BatchNormLayer::new(1);
        let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let gamma = bn.gamma.clone();
        bn.forward(&x, BnMode::Train).unwrap();
        assert!((bn.running_mean[0] - 0.1).abs() < 1e-15);
        // unbiased variance of {0, 2} is 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
        assert_eq!(bn.gamma, gamma);
    }

    #[test]
    fn single_row_uses_running_stats() {
        let mut bn = BatchNormLayer::new(2);
        bn.running_mean = vec![1.0, -1.0];
        bn.running_var = vec![4.0, 1.0];
        bn.eps = 0.0;
        let x = Matrix::from_rows(&[[3.0, 0.0]]).unwrap();
        let (y, _) = bn.forward(&x, BnMode::Recompute).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn gamma_gradient_vanishes_for_sum_loss() {
        let mut bn = BatchNormLayer::new(1);
        bn.eps = 0.0;
        let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let (y, cache) = bn.forward(&x, BnMode::Recompute).unwrap();
        let ones = Matrix::filled(y.rows(), y.cols(), 1.0);
        let gx = bn.backward(&cache, &ones);
        assert_eq!(bn.gamma.grad, vec![0.0]);
        assert_eq!(bn.beta.grad, vec![2.0]);
        assert!(gx.as_slice().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn affine_weight_gradient_of_sum_equals_input() {
        let mut a = AffineLayer::from_parts(2, 2, vec![1.0, 0.0, 0.0, 1.0], Some(vec![0.0, 0.0]));
        let x = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let y = a.forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
        a.backward(&x, &Matrix::filled(1, 2, 1.0));
        assert_eq!(a.weight.grad, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(a.bias.as_ref().unwrap().grad, vec![1.0, 1.0]);
    }
}
