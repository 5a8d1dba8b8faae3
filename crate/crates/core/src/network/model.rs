//! Deep hypercomplex residual network assembled from [`super::layers`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::NetworkConfig;
use super::layers::{
    argmax_rows, softmax_cross_entropy, Bn, Dense, GlobalAvgPool, HConv, LayerInfo, LayerKind, Module, ParamVisitor,
    Relu,
};
use crate::algebra::AlgebraDim;
use crate::batchnorm::Mode;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::init::{Criterion, PhaseLaw};
use crate::scalar::Scalar;
use crate::tensor::{pack, unpack, HypercomplexTensor, RealTensor};

/// Real `BN → ReLU → Conv → BN → ReLU → Conv` block without a shortcut,
/// channel count preserved.
pub struct InputBlock<T> {
    bn1: Bn<T>,
    relu1: Relu,
    conv1: HConv<T>,
    bn2: Bn<T>,
    relu2: Relu,
    conv2: HConv<T>,
}

impl<T: Scalar> InputBlock<T> {
    pub fn new(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let c = cfg.input_channels;
        let real = AlgebraDim::REAL;
        let conv = |rng: &mut ChaCha8Rng| HConv::init(real, c, c, cfg.kernel, 1, cfg.init, cfg.phase_law, rng);
        Ok(Self {
            bn1: Bn::new(real, c, cfg.bn_eps, cfg.bn_momentum)?,
            relu1: Relu::new(),
            conv1: conv(rng)?,
            bn2: Bn::new(real, c, cfg.bn_eps, cfg.bn_momentum)?,
            relu2: Relu::new(),
            conv2: conv(rng)?,
        })
    }

    fn layers_mut(&mut self) -> [&mut dyn Module<T>; 6] {
        [
            &mut self.bn1,
            &mut self.relu1,
            &mut self.conv1,
            &mut self.bn2,
            &mut self.relu2,
            &mut self.conv2,
        ]
    }

    fn layers(&self) -> [(&str, &dyn Module<T>); 6] {
        [
            ("bn1", &self.bn1),
            ("relu1", &self.relu1),
            ("conv1", &self.conv1),
            ("bn2", &self.bn2),
            ("relu2", &self.relu2),
            ("conv2", &self.conv2),
        ]
    }
}

impl<T: Scalar> Module<T> for InputBlock<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let mut h = x.clone();
        for l in self.layers_mut() {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>> {
        let mut g = grad.clone();
        for l in self.layers_mut().into_iter().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        for l in self.layers_mut() {
            l.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T], &mut u64)) {
        for l in self.layers_mut() {
            l.visit_buffers(f);
        }
    }

    fn visit_masks(&self, f: &mut dyn FnMut(&[bool])) {
        for (_, l) in self.layers() {
            l.visit_masks(f);
        }
    }

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>) {
        for (n, l) in self.layers() {
            l.describe(&format!("{name}.{n}"), out);
        }
    }
}

/// Builds the hypercomplex input: component 0 is the image itself,
/// component `p` the output of input block `p` (or of the one shared block).
pub struct InputConstruction<T> {
    dim: AlgebraDim,
    shared: bool,
    blocks: Vec<InputBlock<T>>,
}

impl<T: Scalar> InputConstruction<T> {
    pub fn new(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let dim = cfg.dim()?;
        let count = match dim.get() {
            1 => 0,
            _ if cfg.shared_input_block => 1,
            d => d - 1,
        };
        let blocks = (0..count).map(|_| InputBlock::new(cfg, rng)).collect::<Result<_>>()?;
        Ok(Self {
            dim,
            shared: cfg.shared_input_block,
            blocks,
        })
    }

    pub fn blocks_mut(&mut self) -> &mut [InputBlock<T>] {
        &mut self.blocks
    }
}

/// Packs `[images, block_1(images), …, block_{d-1}(images)]`.
pub fn octonion_input<T: Scalar>(
    images: &RealTensor<T>,
    construction: &mut InputConstruction<T>,
    mode: Mode,
) -> Result<HypercomplexTensor<T>> {
    let d = construction.dim.get();
    if d == 1 {
        return HypercomplexTensor::new(images.clone(), construction.dim);
    }
    let mut parts = Vec::with_capacity(d);
    parts.push(images.clone());
    if construction.shared {
        let y = construction.blocks[0].forward(images, mode)?;
        parts.extend(std::iter::repeat_n(y, d - 1));
    } else {
        for b in construction.blocks.iter_mut() {
            parts.push(b.forward(images, mode)?);
        }
    }
    pack(&parts)
}

impl<T: Scalar> Module<T> for InputConstruction<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        Ok(octonion_input(x, self, mode)?.into_inner())
    }

    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>> {
        let parts = unpack(&HypercomplexTensor::new(grad.clone(), self.dim)?);
        let mut gx = parts[0].clone();
        if self.dim.get() == 1 {
            return Ok(gx);
        }
        if self.shared {
            let mut sum = parts[1].clone();
            for p in &parts[2..] {
                sum.add_assign(p)?;
            }
            gx.add_assign(&self.blocks[0].backward(&sum)?)?;
        } else {
            for (b, g) in self.blocks.iter_mut().zip(&parts[1..]) {
                gx.add_assign(&b.backward(g)?)?;
            }
        }
        Ok(gx)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        for b in &mut self.blocks {
            b.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T], &mut u64)) {
        for b in &mut self.blocks {
            b.visit_buffers(f);
        }
    }

    fn visit_masks(&self, f: &mut dyn FnMut(&[bool])) {
        for b in &self.blocks {
            b.visit_masks(f);
        }
    }

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.describe(&format!("{name}.block{}", i + 1), out);
        }
    }
}

/// `relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x))`.
pub struct ResidualBlock<T> {
    conv1: HConv<T>,
    bn1: Bn<T>,
    relu1: Relu,
    conv2: HConv<T>,
    bn2: Bn<T>,
    shortcut: Option<HConv<T>>,
    relu_out: Relu,
}

impl<T: Scalar> ResidualBlock<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: AlgebraDim,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        cfg: &NetworkConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let (crit, law): (Criterion, PhaseLaw) = (cfg.init, cfg.phase_law);
        let conv1 = HConv::init(dim, c_in, c_out, kernel, stride, crit, law, rng)?;
        let conv2 = HConv::init(dim, c_out, c_out, kernel, 1, crit, law, rng)?;
        let shortcut = if stride != 1 || c_in != c_out {
            Some(HConv::init(dim, c_in, c_out, 1, stride, crit, law, rng)?)
        } else {
            None
        };
        Ok(Self {
            conv1,
            bn1: Bn::new(dim, c_out, cfg.bn_eps, cfg.bn_momentum)?,
            relu1: Relu::new(),
            conv2,
            bn2: Bn::new(dim, c_out, cfg.bn_eps, cfg.bn_momentum)?,
            shortcut,
            relu_out: Relu::new(),
        })
    }

    fn main_mut(&mut self) -> [&mut dyn Module<T>; 5] {
        [
            &mut self.conv1,
            &mut self.bn1,
            &mut self.relu1,
            &mut self.conv2,
            &mut self.bn2,
        ]
    }
}

impl<T: Scalar> Module<T> for ResidualBlock<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let mut h = x.clone();
        for l in self.main_mut() {
            h = l.forward(&h, mode)?;
        }
        let sc = match &mut self.shortcut {
            Some(p) => p.forward(x, mode)?,
            None => x.clone(),
        };
        if sc.shape() != h.shape() {
            return Err(Error::Shape(format!(
                "residual operands differ: {:?} vs {:?}",
                h.shape(),
                sc.shape()
            )));
        }
        h.add_assign(&sc)?;
        self.relu_out.forward(&h, mode)
    }

    fn backward(&mut self, grad: &RealTensor<T>) -> Result<RealTensor<T>> {
        let g = self.relu_out.backward(grad)?;
        let mut gm = g.clone();
        for l in self.main_mut().into_iter().rev() {
            gm = l.backward(&gm)?;
        }
        let gs = match &mut self.shortcut {
            Some(p) => p.backward(&g)?,
            None => g,
        };
        gm.add_assign(&gs)?;
        Ok(gm)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        for l in self.main_mut() {
            l.visit_params(f);
        }
        if let Some(p) = &mut self.shortcut {
            p.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T], &mut u64)) {
        for l in self.main_mut() {
            l.visit_buffers(f);
        }
    }

    fn visit_masks(&self, f: &mut dyn FnMut(&[bool])) {
        Module::<T>::visit_masks(&self.relu1, f);
        Module::<T>::visit_masks(&self.relu_out, f);
    }

    fn describe(&self, name: &str, out: &mut Vec<LayerInfo>) {
        self.conv1.describe(&format!("{name}.conv1"), out);
        self.bn1.describe(&format!("{name}.bn1"), out);
        Module::<T>::describe(&self.relu1, &format!("{name}.relu1"), out);
        self.conv2.describe(&format!("{name}.conv2"), out);
        self.bn2.describe(&format!("{name}.bn2"), out);
        if let Some(p) = &self.shortcut {
            p.describe(&format!("{name}.shortcut"), out);
        }
        out.push(LayerInfo {
            name: format!("{name}.add"),
            kind: LayerKind::Add,
            channels: (self.conv2.weight.c_out(), self.conv2.weight.c_out()),
            params: 0,
            buffers: 0,
        });
        Module::<T>::describe(&self.relu_out, &format!("{name}.relu_out"), out);
    }
}

/// Parameter totals of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    pub trainable: usize,
    /// Running-statistic scalars (means and distinct covariance entries).
    pub buffers: usize,
    pub total: usize,
    /// Trainable parameters of hypercomplex convolutions.
    pub hconv: usize,
}

pub struct Network<T> {
    config: NetworkConfig,
    input: InputConstruction<T>,
    stem_conv: HConv<T>,
    stem_bn: Bn<T>,
    stem_relu: Relu,
    blocks: Vec<ResidualBlock<T>>,
    pool: GlobalAvgPool,
    dense: Dense<T>,
}

impl<T: Scalar> Network<T> {
    /// Builds and initializes the network with an RNG seeded from
    /// `config.seed`.
    pub fn build(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dim = config.dim()?;
        let d = dim.get();
        let input = InputConstruction::new(config, &mut rng)?;
        let f0 = config.stage_filters[0];
        let stem_conv = HConv::init(
            dim,
            config.input_channels * d,
            f0,
            config.kernel,
            1,
            config.init,
            config.phase_law,
            &mut rng,
        )?;
        let stem_bn = Bn::new(dim, f0, config.bn_eps, config.bn_momentum)?;
        let mut blocks = Vec::new();
        let mut width = f0;
        for (s, (&count, &filters)) in config.stage_blocks.iter().zip(&config.stage_filters).enumerate() {
            for b in 0..count {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                blocks.push(ResidualBlock::new(dim, width, filters, config.kernel, stride, config, &mut rng)?);
                width = filters;
            }
        }
        let dense = Dense::init(width, config.classes, &mut rng);
        Ok(Self {
            config: config.clone(),
            input,
            stem_conv,
            stem_bn,
            stem_relu: Relu::new(),
            blocks,
            pool: GlobalAvgPool::new(),
            dense,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn input_construction_mut(&mut self) -> &mut InputConstruction<T> {
        &mut self.input
    }

    fn modules_mut(&mut self) -> Vec<&mut dyn Module<T>> {
        let mut m: Vec<&mut dyn Module<T>> = vec![
            &mut self.input,
            &mut self.stem_conv,
            &mut self.stem_bn,
            &mut self.stem_relu,
        ];
        for b in &mut self.blocks {
            m.push(b);
        }
        m.push(&mut self.pool);
        m.push(&mut self.dense);
        m
    }

    fn modules(&self) -> Vec<(String, &dyn Module<T>)> {
        let mut m: Vec<(String, &dyn Module<T>)> = vec![
            ("input".into(), &self.input),
            ("stem.conv".into(), &self.stem_conv),
            ("stem.bn".into(), &self.stem_bn),
            ("stem.relu".into(), &self.stem_relu),
        ];
        let mut idx = 0;
        for (s, &count) in self.config.stage_blocks.iter().enumerate() {
            for b in 0..count {
                m.push((format!("stage{}.block{}", s + 1, b + 1), &self.blocks[idx]));
                idx += 1;
            }
        }
        m.push(("pool".into(), &self.pool));
        m.push(("dense".into(), &self.dense));
        m
    }

    /// Logits `(N, classes)` for images `(N, C, H, W)`.
    pub fn forward(&mut self, images: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let (_, c, _, _) = images.dims4()?;
        if c != self.config.input_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {c}",
                self.config.input_channels
            )));
        }
        let mut h = images.clone();
        for m in self.modules_mut() {
            h = m.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Backpropagates `d loss / d logits` through the last training forward
    /// pass and returns the image gradient.
    pub fn backward(&mut self, grad_logits: &RealTensor<T>) -> Result<RealTensor<T>> {
        let mut g = grad_logits.clone();
        for m in self.modules_mut().into_iter().rev() {
            g = m.backward(&g)?;
        }
        Ok(g)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        for m in self.modules_mut() {
            m.visit_params(f);
        }
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T], &mut u64)) {
        for m in self.modules_mut() {
            m.visit_buffers(f);
        }
    }

    /// Concatenation of every ReLU mask of the last training forward pass.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for (_, m) in self.modules() {
            m.visit_masks(&mut |mask| out.extend_from_slice(mask));
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, _, g| g.iter_mut().for_each(|v| *v = T::zero()));
    }

    pub fn layer_info(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        for (name, m) in self.modules() {
            m.describe(&name, &mut out);
        }
        out.push(LayerInfo {
            name: "loss".into(),
            kind: LayerKind::SoftmaxXent,
            channels: (self.config.classes, 1),
            params: 0,
            buffers: 0,
        });
        out
    }

    pub fn param_counts(&self) -> ParamCounts {
        let info = self.layer_info();
        let trainable = info.iter().map(|l| l.params).sum();
        let buffers = info.iter().map(|l| l.buffers).sum();
        let hconv = info.iter().filter(|l| l.kind == LayerKind::Hconv).map(|l| l.params).sum();
        ParamCounts {
            trainable,
            buffers,
            total: trainable + buffers,
            hconv,
        }
    }

    /// Mean cross-entropy of a batch and the gradient of every parameter.
    pub fn loss_and_grad(&mut self, images: &RealTensor<T>, labels: &[usize]) -> Result<T> {
        self.zero_grad();
        let logits = self.forward(images, Mode::Train)?;
        let (loss, g) = softmax_cross_entropy(&logits, labels)?;
        if loss.is_finite() {
            self.backward(&g)?;
        }
        Ok(loss)
    }

    /// Training-mode loss without touching gradients.
    pub fn train_loss(&mut self, images: &RealTensor<T>, labels: &[usize]) -> Result<T> {
        let logits = self.forward(images, Mode::Train)?;
        Ok(softmax_cross_entropy(&logits, labels)?.0)
    }

    pub fn predict(&mut self, images: &RealTensor<T>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(images, Mode::Infer)?))
    }
}

/// Stochastic gradient descent with (Nesterov) momentum:
/// `v ← μv − lr·g`, then `p ← p + μv − lr·g` (Nesterov) or `p ← p + v`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub momentum: T,
    pub nesterov: bool,
    velocity: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, nesterov: bool) -> Self {
        Self {
            momentum: T::lit(momentum),
            nesterov,
            velocity: Vec::new(),
            steps: 0,
        }
    }

    pub fn for_config(cfg: &NetworkConfig) -> Self {
        Self::new(cfg.momentum, cfg.nesterov)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, net: &mut Network<T>, lr: T) {
        let mu = self.momentum;
        let nesterov = self.nesterov;
        let mut idx = 0;
        let velocity = &mut self.velocity;
        net.visit_params(&mut |_, p, g| {
            if velocity.len() <= idx {
                velocity.push(vec![T::zero(); p.len()]);
            }
            let v = &mut velocity[idx];
            for ((pv, &gv), vv) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vv = mu * *vv - lr * gv;
                *pv += if nesterov { mu * *vv - lr * gv } else { *vv };
            }
            idx += 1;
        });
        self.steps += 1;
    }
}

/// One optimization step on a batch; returns the pre-update loss.
pub fn train_step<T: Scalar>(
    net: &mut Network<T>,
    opt: &mut Sgd<T>,
    images: &RealTensor<T>,
    labels: &[usize],
    lr: T,
) -> Result<T> {
    let loss = net.loss_and_grad(images, labels)?;
    if !loss.is_finite() {
        let mut max_param = 0.0f64;
        let mut non_finite = 0usize;
        net.visit_params(&mut |_, p, _| {
            for &v in p.iter() {
                if v.is_finite() {
                    max_param = max_param.max(v.abs().as_f64());
                } else {
                    non_finite += 1;
                }
            }
        });
        return Err(Error::Divergence {
            step: opt.steps() as usize,
            loss: loss.as_f64(),
            detail: format!("lr {lr}, max |param| {max_param:.3e}, {non_finite} non-finite parameters"),
        });
    }
    opt.step(net, lr);
    Ok(loss)
}

fn batches(n: usize, batch_size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(batch_size.max(1)).map(move |s| (s..(s + batch_size).min(n)).collect())
}

/// Top-1 error in inference mode.
pub fn evaluate<T: Scalar>(net: &mut Network<T>, data: &Dataset<T>, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    let mut wrong = 0usize;
    for idx in batches(data.len(), batch_size) {
        let (x, y) = data.batch(&idx)?;
        let pred = net.predict(&x)?;
        wrong += pred.iter().zip(&y).filter(|(p, t)| p != t).count();
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Runs training-mode forward passes over `data` without updating
/// parameters, so that the running statistics describe the data.
pub fn calibrate<T: Scalar>(net: &mut Network<T>, data: &Dataset<T>, batch_size: usize) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::Domain("calibration needs at least two examples".into()));
    }
    for idx in batches(data.len(), batch_size.max(2)) {
        if idx.len() < 2 {
            continue;
        }
        let (x, _) = data.batch(&idx)?;
        net.forward(&x, Mode::Train)?;
    }
    Ok(())
}
