//! Differentiable layers with cached forward state.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::algebra::AlgebraDim;
use crate::batchnorm::{Mode, WhiteningBatchNorm};
use crate::conv::{hconv2d, hconv2d_backward, BlockWeight};
use crate::error::{Error, Result};
use crate::init::{init_weight, Criterion, InitSpec, PhaseLaw};
use crate::scalar::Scalar;
use crate::tensor::{HypercomplexTensor, Padding, RealTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Hconv,
    OctonionBn,
    Relu,
    RealConv,
    RealBn,
    Add,
    Avgpool,
    Dense,
    SoftmaxXent,
}

/// Groups of parameters reported separately by gradient checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamClass {
    ConvWeight,
    Gamma,
    Beta,
    DenseWeight,
    DenseBias,
}

impl ParamClass {
    pub const ALL: [ParamClass; 5] = [
        ParamClass::ConvWeight,
        ParamClass::Gamma,
        ParamClass::Beta,
        ParamClass::DenseWeight,
        ParamClass::DenseBias,
    ];
}

/// One row of a per-layer parameter listing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    /// Real input/output channels (features for dense layers).
    pub channels: (usize, usize),
    pub params: usize,
    /// Non-trainable running statistics.
    pub buffers: usize,
}

pub type ParamVisitor<'a, T> = dyn FnMut(ParamClass, &mut [T], &mut [T]) + 'a;

pub trait Module<T: Scalar>: Send {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>>;

    /// Accumulates parameter gradients and returns the input gradient of the
    /// last training-mode forward pass.
    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>>;

    /// Calls `f(class, values, grads)` for every parameter tensor in a fixed
    /// order.
    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>);

    /// Calls `f` for every running-statistic buffer and its update counter.
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut [T], &mut u64)) {}

    /// Calls `f` with every cached activation mask (used to detect kinks).
    fn visit_masks(&self, _f: &mut dyn FnMut(&[bool])) {}

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>);
}

fn missing_cache(layer: &str) -> Error {
    Error::Domain(format!("{layer}: backward called without a training forward pass"))
}

/// Hypercomplex convolution without bias. With `d = 1` it is an ordinary
/// real convolution.
pub struct HConv<T> {
    pub weight: BlockWeight<T>,
    pub grads: Vec<RealTensor<T>>,
    pub stride: usize,
    pub padding: Padding,
    input: Option<HypercomplexTensor<T>>,
}

impl<T: Scalar> HConv<T> {
    pub fn new(weight: BlockWeight<T>, stride: usize, padding: Padding) -> Self {
        let grads = weight.components().iter().map(|c| RealTensor::zeros(c.shape())).collect();
        Self {
            weight,
            grads,
            stride,
            padding,
            input: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        dim: AlgebraDim,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        criterion: Criterion,
        law: PhaseLaw,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = InitSpec::for_conv(criterion, dim, c_out, c_in, kernel)?;
        let padding = if kernel == 1 { Padding::Valid } else { Padding::Same };
        Ok(Self::new(init_weight(&spec, c_out, c_in, kernel, law, rng)?, stride, padding))
    }

    pub fn dim(&self) -> AlgebraDim {
        self.weight.dim()
    }
}

impl<T: Scalar> Module<T> for HConv<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let hx = HypercomplexTensor::new(x.clone(), self.weight.dim())?;
        let y = hconv2d(&hx, &self.weight, self.stride, self.padding)?;
        self.input = (mode == Mode::Train).then_some(hx);
        Ok(y.into_inner())
    }

    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("hconv"))?;
        let g = hconv2d_backward(x, &self.weight, grad, self.stride, self.padding)?;
        for (acc, gc) in self.grads.iter_mut().zip(&g.components) {
            acc.add_assign(gc)?;
        }
        Ok(g.input)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        for (w, g) in self.weight.components_mut().iter_mut().zip(self.grads.iter_mut()) {
            f(ParamClass::ConvWeight, w.data_mut(), g.data_mut());
        }
    }

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>) {
        let kind = if self.weight.dim().get() == 1 {
            LayerKind::RealConv
        } else {
            LayerKind::Hconv
        };
        out.push(LayerInfo {
            name: name.to_string(),
            kind,
            channels: (self.weight.c_in(), self.weight.c_out()),
            params: self.weight.param_count(),
            buffers: 0,
        });
    }
}

/// Whitening batch normalization; ordinary batch normalization for `d = 1`.
pub struct Bn<T> {
    pub inner: WhiteningBatchNorm<T>,
    channels: usize,
}

impl<T: Scalar> Bn<T> {
    pub fn new(dim: AlgebraDim, channels: usize, eps: f64, momentum: f64) -> Result<Self> {
        let mut inner = WhiteningBatchNorm::new(dim, channels)?;
        inner.state.eps = T::lit(eps);
        inner.state.momentum = T::lit(momentum);
        Ok(Self { inner, channels })
    }
}

impl<T: Scalar> Module<T> for Bn<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        self.inner.forward(x, mode)
    }

    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>> {
        self.inner.backward(grad)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        let bn = &mut self.inner;
        f(ParamClass::Gamma, bn.affine.gamma_params_mut(), &mut bn.grad_gamma);
        f(ParamClass::Beta, bn.affine.beta_mut(), &mut bn.grad_beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T], &mut u64)) {
        let state = &mut self.inner.state;
        let mut flat: Vec<T> = state.running_mean.iter().flatten().copied().collect();
        for c in &state.running_cov {
            flat.extend_from_slice(c.as_slice());
        }
        f(&mut flat, &mut state.observed);
        let mut it = flat.into_iter();
        for m in state.running_mean.iter_mut() {
            m.iter_mut().for_each(|v| *v = it.next().expect("buffer length"));
        }
        for c in state.running_cov.iter_mut() {
            c.as_mut_slice().iter_mut().for_each(|v| *v = it.next().expect("buffer length"));
        }
    }

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>) {
        let kind = if self.inner.dim().get() == 1 {
            LayerKind::RealBn
        } else {
            LayerKind::OctonionBn
        };
        out.push(LayerInfo {
            name: name.to_string(),
            kind,
            channels: (self.channels, self.channels),
            params: self.inner.param_count(),
            buffers: self.inner.buffer_count(),
        });
    }
}

/// Componentwise ReLU.
#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
    shape: Vec<usize>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Module<T> for Relu {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        if mode == Mode::Train {
            self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
            self.shape = x.shape().to_vec();
        } else {
            self.mask = None;
        }
        Ok(x.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>> {
        let mask = self.mask.as_ref().ok_or_else(|| missing_cache("relu"))?;
        if grad.shape() != self.shape.as_slice() {
            return Err(Error::Shape(format!("relu gradient shape {:?} vs {:?}", grad.shape(), self.shape)));
        }
        let data = grad
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { T::zero() })
            .collect();
        RealTensor::from_vec(grad.shape(), data)
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor<'_, T>) {}

    fn visit_masks(&self, f: &mut dyn FnMut(&[bool])) {
        if let Some(m) = &self.mask {
            f(m);
        }
    }

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>) {
        let c = self.shape.get(1).copied().unwrap_or(0);
        out.push(LayerInfo {
            name: name.to_string(),
            kind: LayerKind::Relu,
            channels: (c, c),
            params: 0,
            buffers: 0,
        });
    }
}

/// Global average pooling `(N, C, H, W) -> (N, C)`.
#[derive(Default)]
pub struct GlobalAvgPool {
    shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Module<T> for GlobalAvgPool {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        let plane = h * w;
        let inv = T::one() / T::from_usize_lossy(plane);
        let data = x.data().chunks(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        self.shape = (mode == Mode::Train).then(|| x.shape().to_vec());
        RealTensor::from_vec(&[n, c], data)
    }

    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>> {
        let shape = self.shape.as_ref().ok_or_else(|| missing_cache("avgpool"))?;
        let plane = shape[2] * shape[3];
        if grad.shape() != [shape[0], shape[1]] {
            return Err(Error::Shape(format!("pool gradient shape {:?}", grad.shape())));
        }
        let inv = T::one() / T::from_usize_lossy(plane);
        let mut out = RealTensor::zeros(shape);
        for (chunk, &g) in out.data_mut().chunks_mut(plane).zip(grad.data()) {
            chunk.iter_mut().for_each(|v| *v = g * inv);
        }
        Ok(out)
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor<'_, T>) {}

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>) {
        out.push(LayerInfo {
            name: name.to_string(),
            kind: LayerKind::Avgpool,
            channels: (0, 0),
            params: 0,
            buffers: 0,
        });
    }
}

/// Real fully connected layer `(N, F) -> (N, K)`.
pub struct Dense<T> {
    /// `(K, F)` row-major.
    pub weight: RealTensor<T>,
    pub bias: RealTensor<T>,
    pub grad_weight: RealTensor<T>,
    pub grad_bias: RealTensor<T>,
    input: Option<RealTensor<T>>,
}

impl<T: Scalar> Dense<T> {
    /// Glorot-normal weights, zero bias.
    pub fn init<R: Rng + ?Sized>(features: usize, classes: usize, rng: &mut R) -> Self {
        let sigma = (2.0 / (features + classes) as f64).sqrt();
        let weight = RealTensor::from_fn(&[classes, features], |_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(sigma * z)
        });
        Self {
            grad_weight: RealTensor::zeros(weight.shape()),
            weight,
            bias: RealTensor::zeros(&[classes]),
            grad_bias: RealTensor::zeros(&[classes]),
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.shape()[0], self.weight.shape()[1])
    }
}

impl<T: Scalar> Module<T> for Dense<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let (k, f) = self.dims();
        if x.shape().len() != 2 || x.shape()[1] != f {
            return Err(Error::Shape(format!("dense layer expects (N, {f}), got {:?}", x.shape())));
        }
        let n = x.shape()[0];
        let w = self.weight.data();
        let b = self.bias.data();
        let mut out = Vec::with_capacity(n * k);
        for row in x.data().chunks(f) {
            for c in 0..k {
                let wr = &w[c * f..][..f];
                out.push(b[c] + wr.iter().zip(row).map(|(&a, &v)| a * v).sum::<T>());
            }
        }
        self.input = (mode == Mode::Train).then(|| x.clone());
        RealTensor::from_vec(&[n, k], out)
    }

    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("dense"))?;
        let (k, f) = self.dims();
        let n = x.shape()[0];
        if grad.shape() != [n, k] {
            return Err(Error::Shape(format!("dense gradient shape {:?}", grad.shape())));
        }
        let mut gx = vec![T::zero(); n * f];
        let w = self.weight.data();
        for i in 0..n {
            let xi = &x.data()[i * f..][..f];
            let gi = &grad.data()[i * k..][..k];
            let gxi = &mut gx[i * f..][..f];
            for c in 0..k {
                let g = gi[c];
                self.grad_bias.data_mut()[c] += g;
                let gw = &mut self.grad_weight.data_mut()[c * f..][..f];
                for j in 0..f {
                    gw[j] += g * xi[j];
                    gxi[j] += g * w[c * f + j];
                }
            }
        }
        RealTensor::from_vec(&[n, f], gx)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        f(ParamClass::DenseWeight, self.weight.data_mut(), self.grad_weight.data_mut());
        f(ParamClass::DenseBias, self.bias.data_mut(), self.grad_bias.data_mut());
    }

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>) {
        let (k, f) = self.dims();
        out.push(LayerInfo {
            name: name.to_string(),
            kind: LayerKind::Dense,
            channels: (f, k),
            params: k * f + k,
            buffers: 0,
        });
    }
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the
/// logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &RealTensor<T>, labels: &[usize]) -> Result<(T, RealTensor<T>)> {
    if logits.shape().len() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::Shape(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if n == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
    }
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        loss += total.ln() + max - row[label];
        for (c, &e) in exps.iter().enumerate() {
            let p = e / total;
            let target = if c == label { T::one() } else { T::zero() };
            grad.push((p - target) * inv_n);
        }
    }
    Ok((loss * inv_n, RealTensor::from_vec(&[n, k], grad)?))
}

/// Index of the largest logit in every row.
pub fn argmax_rows<T: Scalar>(logits: &RealTensor<T>) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_matches_hand_computation() {
        let logits = RealTensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[2, 0]).unwrap();
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let want = 0.5 * ((z.ln() - 3.0) + 3f64.ln());
        assert!((loss - want).abs() < 1e-14);
        assert!((grad.data()[2] - 0.5 * (3f64.exp() / z - 1.0)).abs() < 1e-14);
        assert!((grad.data()[3] - 0.5 * (1.0 / 3.0 - 1.0)).abs() < 1e-14);
        let row_sums: Vec<f64> = grad.data().chunks(3).map(|r| r.iter().sum()).collect();
        assert!(row_sums.iter().all(|s| s.abs() < 1e-15));
        assert!(softmax_cross_entropy(&logits, &[3, 0]).is_err());
    }

    #[test]
    fn softmax_is_shift_stable() {
        let logits = RealTensor::from_vec(&[1, 2], vec![1000.0, 1001.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!((loss - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn pool_and_dense_shapes_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = RealTensor::from_fn(&[2, 4, 3, 3], |i| (i as f64 * 0.3).sin());
        let mut pool = GlobalAvgPool::new();
        let p = Module::<f64>::forward(&mut pool, &x, Mode::Train).unwrap();
        assert_eq!(p.shape(), [2, 4]);
        let want: f64 = x.data()[..9].iter().sum::<f64>() / 9.0;
        assert!((p.data()[0] - want).abs() < 1e-15);
        let mut dense = Dense::<f64>::init(4, 3, &mut rng);
        let y = dense.forward(&p, Mode::Train).unwrap();
        assert_eq!(y.shape(), [2, 3]);
        let gy = RealTensor::from_fn(&[2, 3], |i| i as f64 - 2.5);
        let gp = dense.backward(&gy).unwrap();
        let gx = Module::<f64>::backward(&mut pool, &gp).unwrap();
        // loss = <gy, dense(pool(x))> is linear in x: check one coordinate exactly
        let loss = |x: &RealTensor<f64>, dense: &mut Dense<f64>| {
            let mut pool = GlobalAvgPool::new();
            let p = Module::<f64>::forward(&mut pool, x, Mode::Infer).unwrap();
            let y = dense.forward(&p, Mode::Infer).unwrap();
            y.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut xp = x.clone();
        xp.data_mut()[5] += 1.0;
        let delta = loss(&xp, &mut dense) - loss(&x, &mut dense);
        assert!((delta - gx.data()[5]).abs() < 1e-12);
        assert_eq!(dense.grad_bias.data(), &[-2.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_masks_gradient() {
        let mut relu = Relu::new();
        let x = RealTensor::from_vec(&[1, 1, 1, 4], vec![-1.0, 0.0, 2.0, 3.0]).unwrap();
        let y = relu.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0, 3.0]);
        let g = relu.backward(&RealTensor::full(&[1, 1, 1, 4], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 1.0]);
        let mut fresh = Relu::new();
        assert!(Module::<f64>::backward(&mut fresh, &g).is_err());
    }
}
