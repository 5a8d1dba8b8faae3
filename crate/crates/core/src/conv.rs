//! Hypercomplex convolution as a signed block-matrix real convolution.
//!
//! For algebra dimension `d`, a weight `W = Σ_p W_p e_p` convolved with an
//! input `x = Σ_q x_q e_q` yields output component `r` as
//! `y_r = Σ_q sign[r][q] · (W_{index[r][q]} * x_q)`, where the signs and
//! indices come from expanding the product over the Cayley table. The
//! production path materializes the `d × d` block kernel once and runs a
//! single real convolution over the packed channels.

use std::sync::OnceLock;

use crate::algebra::{subalgebra_table, AlgebraDim, CayleyTable};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{conv2d_real, conv2d_real_backward, HypercomplexTensor, Padding, RealTensor};

/// Reference real block matrix of octonion convolution, row `r` = output
/// component, column `q` = input component. Entry `±(p + 1)` means `±W_p`.
pub const OCTONION_BLOCK_MATRIX: [[i8; 8]; 8] = [
    [1, -2, -3, -4, -5, -6, -7, -8],
    [2, 1, -4, 3, -6, 5, 8, -7],
    [3, 4, 1, -2, -7, -8, 5, 6],
    [4, -3, 2, 1, -8, 7, -6, 5],
    [5, 6, 7, 8, 1, -2, -3, -4],
    [6, -5, 8, -7, 2, 1, 4, -3],
    [7, -8, -5, 6, 3, -4, 1, 2],
    [8, 7, -6, -5, 4, 3, -2, 1],
];

/// Signed placement of the weight components in the expanded real kernel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    dim: usize,
    sign: [[i8; 8]; 8],
    index: [[u8; 8]; 8],
}

impl BlockLayout {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn sign(&self, r: usize, q: usize) -> i8 {
        self.sign[r][q]
    }

    #[inline]
    pub fn index(&self, r: usize, q: usize) -> usize {
        self.index[r][q] as usize
    }

    /// Entry `(r, q)` encoded as `±(p + 1)`, the same encoding as
    /// [`OCTONION_BLOCK_MATRIX`].
    pub fn signed_entry(&self, r: usize, q: usize) -> i8 {
        self.sign[r][q] * (self.index[r][q] as i8 + 1)
    }

    /// Validated layout for `dim`, derived once per process.
    pub fn for_dim(dim: AlgebraDim) -> &'static BlockLayout {
        static CACHE: OnceLock<[BlockLayout; 4]> = OnceLock::new();
        let all = CACHE.get_or_init(|| {
            AlgebraDim::ALL.map(|d| {
                let table = subalgebra_table(d.get()).expect("supported dimension");
                let layout = derive_layout(&table, d.get()).expect("supported dimension");
                validate_layout(&layout).expect("Cayley table disagrees with the block matrix");
                layout
            })
        });
        let slot = match dim.get() {
            1 => 0,
            2 => 1,
            4 => 2,
            _ => 3,
        };
        &all[slot]
    }
}

/// Expands `(Σ_p W_p e_p)(Σ_q x_q e_q)` symbolically and collects, for every
/// output unit `e_r`, which weight component multiplies each input component.
pub fn derive_layout(table: &CayleyTable, d: usize) -> Result<BlockLayout> {
    AlgebraDim::new(d)?;
    if table.dim() < d {
        return Err(Error::Domain(format!(
            "table of dimension {} cannot produce a {d}-dimensional layout",
            table.dim()
        )));
    }
    let mut layout = BlockLayout {
        dim: d,
        sign: [[0; 8]; 8],
        index: [[0; 8]; 8],
    };
    for p in 0..d {
        for q in 0..d {
            let (s, r) = table.product(p, q);
            if r >= d {
                return Err(Error::Domain(format!(
                    "e{p} e{q} leaves the {d}-dimensional sub-algebra"
                )));
            }
            layout.sign[r][q] = s;
            layout.index[r][q] = p as u8;
        }
    }
    Ok(layout)
}

/// Checks a layout against the leading block of [`OCTONION_BLOCK_MATRIX`].
pub fn validate_layout(layout: &BlockLayout) -> Result<()> {
    let d = layout.dim();
    for r in 0..d {
        for q in 0..d {
            let got = layout.signed_entry(r, q);
            let want = OCTONION_BLOCK_MATRIX[r][q];
            if got != want {
                return Err(Error::Domain(format!(
                    "block ({r}, {q}) of the {d}-dimensional layout is {got}, reference is {want}"
                )));
            }
        }
    }
    Ok(())
}

/// Weights of a hypercomplex convolution: `d` real kernels of shape
/// `(C_out/d, C_in/d, k, k)` plus an optional per-output-channel bias.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeight<T> {
    dim: AlgebraDim,
    components: Vec<RealTensor<T>>,
    bias: Option<RealTensor<T>>,
}

impl<T: Scalar> BlockWeight<T> {
    pub fn new(components: Vec<RealTensor<T>>, bias: Option<RealTensor<T>>) -> Result<Self> {
        let dim = AlgebraDim::new(components.len()).map_err(|_| Error::Arity {
            got: components.len(),
        })?;
        let shape = components[0].shape().to_vec();
        if shape.len() != 4 {
            return Err(Error::Shape(format!("kernel components must be rank 4, got {shape:?}")));
        }
        if components.iter().any(|c| c.shape() != shape.as_slice()) {
            return Err(Error::Shape("all weight components must share one shape".into()));
        }
        if let Some(b) = &bias {
            if b.shape() != [shape[0] * dim.get()] {
                return Err(Error::Shape(format!(
                    "bias must have {} entries, got shape {:?}",
                    shape[0] * dim.get(),
                    b.shape()
                )));
            }
        }
        Ok(Self { dim, components, bias })
    }

    pub fn zeros(dim: AlgebraDim, c_out: usize, c_in: usize, kernel: usize) -> Result<Self> {
        let d = dim.get();
        if c_out % d != 0 || c_in % d != 0 {
            return Err(Error::Shape(format!(
                "channel counts {c_in}->{c_out} must be divisible by {d}"
            )));
        }
        let shape = [c_out / d, c_in / d, kernel, kernel];
        Self::new((0..d).map(|_| RealTensor::zeros(&shape)).collect(), None)
    }

    #[inline]
    pub fn dim(&self) -> AlgebraDim {
        self.dim
    }

    pub fn components(&self) -> &[RealTensor<T>] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [RealTensor<T>] {
        &mut self.components
    }

    pub fn bias(&self) -> Option<&RealTensor<T>> {
        self.bias.as_ref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut RealTensor<T>> {
        self.bias.as_mut()
    }

    pub fn with_bias(mut self) -> Self {
        if self.bias.is_none() {
            self.bias = Some(RealTensor::zeros(&[self.c_out()]));
        }
        self
    }

    /// Component kernel shape `(C_out/d, C_in/d, k, k)`.
    pub fn component_shape(&self) -> &[usize] {
        self.components[0].shape()
    }

    pub fn c_out(&self) -> usize {
        self.component_shape()[0] * self.dim.get()
    }

    pub fn c_in(&self) -> usize {
        self.component_shape()[1] * self.dim.get()
    }

    pub fn kernel(&self) -> usize {
        self.component_shape()[2]
    }

    /// The `(C_out, C_in, k, k)` real kernel with block `(r, q)` equal to
    /// `sign[r][q] · W_{index[r][q]}`.
    pub fn expand(&self) -> RealTensor<T> {
        let layout = BlockLayout::for_dim(self.dim);
        let d = self.dim.get();
        let (o, i, k) = (self.component_shape()[0], self.component_shape()[1], self.kernel());
        let kk = k * k;
        let mut out = RealTensor::zeros(&[o * d, i * d, k, k]);
        let data = out.data_mut();
        for r in 0..d {
            for q in 0..d {
                let src = self.components[layout.index(r, q)].data();
                let neg = layout.sign(r, q) < 0;
                for oo in 0..o {
                    for ii in 0..i {
                        let s = &src[(oo * i + ii) * kk..][..kk];
                        let dst = &mut data[((r * o + oo) * (i * d) + q * i + ii) * kk..][..kk];
                        for (dv, &sv) in dst.iter_mut().zip(s) {
                            *dv = if neg { -sv } else { sv };
                        }
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`Self::expand`]: collapses a gradient of the expanded
    /// kernel onto the `d` independent components.
    pub fn fold_expanded(&self, expanded: &RealTensor<T>) -> Result<Vec<RealTensor<T>>> {
        let layout = BlockLayout::for_dim(self.dim);
        let d = self.dim.get();
        let (o, i, k) = (self.component_shape()[0], self.component_shape()[1], self.kernel());
        if expanded.shape() != [o * d, i * d, k, k] {
            return Err(Error::Shape(format!(
                "expanded gradient has shape {:?}, expected {:?}",
                expanded.shape(),
                [o * d, i * d, k, k]
            )));
        }
        let kk = k * k;
        let mut out: Vec<RealTensor<T>> =
            (0..d).map(|_| RealTensor::zeros(self.component_shape())).collect();
        let src = expanded.data();
        for r in 0..d {
            for q in 0..d {
                let p = layout.index(r, q);
                let neg = layout.sign(r, q) < 0;
                let dst = out[p].data_mut();
                for oo in 0..o {
                    for ii in 0..i {
                        let s = &src[((r * o + oo) * (i * d) + q * i + ii) * kk..][..kk];
                        let dd = &mut dst[(oo * i + ii) * kk..][..kk];
                        for (dv, &sv) in dd.iter_mut().zip(s) {
                            if neg {
                                *dv -= sv;
                            } else {
                                *dv += sv;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Number of independent real learnables.
    pub fn param_count(&self) -> usize {
        param_count(self)
    }
}

/// `d · (C_out/d) · (C_in/d) · k²`, plus `C_out` when a bias is present.
pub fn param_count<T: Scalar>(w: &BlockWeight<T>) -> usize {
    let kernel: usize = w.component_shape().iter().product::<usize>() * w.dim().get();
    kernel + w.bias().map_or(0, |b| b.len())
}

fn check_operands<T: Scalar>(x: &HypercomplexTensor<T>, w: &BlockWeight<T>) -> Result<()> {
    if x.dim() != w.dim() {
        return Err(Error::Domain(format!(
            "input algebra dimension {} does not match weight dimension {}",
            x.dim(),
            w.dim()
        )));
    }
    if x.inner().shape()[1] != w.c_in() {
        return Err(Error::Shape(format!(
            "weight expects {} input channels, input has {}",
            w.c_in(),
            x.inner().shape()[1]
        )));
    }
    Ok(())
}

fn add_bias<T: Scalar>(y: &mut RealTensor<T>, bias: &RealTensor<T>) {
    let (n, c, h, wd) = y.dims4().expect("rank-4 output");
    let plane = h * wd;
    let b = bias.data();
    for (idx, chunk) in y.data_mut().chunks_mut(plane).enumerate() {
        let bc = b[idx % c];
        chunk.iter_mut().for_each(|v| *v += bc);
    }
    debug_assert_eq!(n * c * plane, y.len());
}

/// Hypercomplex convolution through the expanded block kernel.
pub fn hconv2d<T: Scalar>(
    x: &HypercomplexTensor<T>,
    w: &BlockWeight<T>,
    stride: usize,
    padding: Padding,
) -> Result<HypercomplexTensor<T>> {
    check_operands(x, w)?;
    let mut y = conv2d_real(x.inner(), &w.expand(), stride, padding)?;
    if let Some(b) = w.bias() {
        add_bias(&mut y, b);
    }
    HypercomplexTensor::new(y, w.dim())
}

/// Hypercomplex convolution evaluated component by component:
/// `d²` small real convolutions accumulated with the layout signs.
pub fn hconv2d_by_components<T: Scalar>(
    x: &HypercomplexTensor<T>,
    w: &BlockWeight<T>,
    stride: usize,
    padding: Padding,
) -> Result<HypercomplexTensor<T>> {
    check_operands(x, w)?;
    let layout = BlockLayout::for_dim(w.dim());
    let d = w.dim().get();
    let xs = crate::tensor::unpack(x);
    let mut outs = Vec::with_capacity(d);
    for r in 0..d {
        let mut acc: Option<RealTensor<T>> = None;
        for (q, xq) in xs.iter().enumerate() {
            let term = conv2d_real(xq, &w.components()[layout.index(r, q)], stride, padding)?;
            let term = if layout.sign(r, q) < 0 { term.scale(-T::one()) } else { term };
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        outs.push(acc.expect("d >= 1"));
    }
    let mut y = crate::tensor::pack(&outs)?.into_inner();
    if let Some(b) = w.bias() {
        add_bias(&mut y, b);
    }
    HypercomplexTensor::new(y, w.dim())
}

/// Gradients of [`hconv2d`]: `(input, weight components, bias)`.
pub struct HConvGrads<T> {
    pub input: RealTensor<T>,
    pub components: Vec<RealTensor<T>>,
    pub bias: Option<RealTensor<T>>,
}

pub fn hconv2d_backward<T: Scalar>(
    x: &HypercomplexTensor<T>,
    w: &BlockWeight<T>,
    grad_out: &RealTensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<HConvGrads<T>> {
    check_operands(x, w)?;
    let expanded = w.expand();
    let (gx, gw) = conv2d_real_backward(x.inner(), &expanded, grad_out, stride, padding)?;
    let components = w.fold_expanded(&gw)?;
    let bias = w.bias().map(|b| {
        let (_, c, h, wd) = grad_out.dims4().expect("rank-4 gradient");
        let mut gb = RealTensor::zeros(b.shape());
        for (idx, chunk) in grad_out.data().chunks(h * wd).enumerate() {
            gb.data_mut()[idx % c] += chunk.iter().copied().sum::<T>();
        }
        gb
    });
    Ok(HConvGrads {
        input: gx,
        components,
        bias,
    })
}

/// Outcome of comparing a small-algebra convolution with the octonion
/// convolution of its zero-padded embedding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingReport {
    pub d_small: usize,
    /// Max |native - embedded| over the leading `d_small` components.
    pub max_abs_diff: f64,
    /// Max |value| over octonion output components `>= d_small`.
    pub leaked_max: f64,
}

impl EmbeddingReport {
    pub fn agrees(&self, tol: f64) -> bool {
        self.max_abs_diff <= tol && self.leaked_max == 0.0
    }
}

fn embed_tensor<T: Scalar>(x: &HypercomplexTensor<T>) -> Result<HypercomplexTensor<T>> {
    let mut parts = crate::tensor::unpack(x);
    let zero = RealTensor::zeros(parts[0].shape());
    parts.resize(8, zero);
    crate::tensor::pack(&parts)
}

fn embed_weight<T: Scalar>(w: &BlockWeight<T>) -> Result<BlockWeight<T>> {
    let mut comps = w.components().to_vec();
    comps.resize(8, RealTensor::zeros(w.component_shape()));
    BlockWeight::new(comps, None)
}

/// Runs a `d_small`-dimensional convolution natively and through the
/// octonion layer on zero-padded operands, and reports the discrepancy.
pub fn embed_subalgebra_check<T: Scalar>(
    x: &HypercomplexTensor<T>,
    w: &BlockWeight<T>,
    stride: usize,
    padding: Padding,
) -> Result<EmbeddingReport> {
    let d_small = x.dim().get();
    if d_small == 8 {
        return Err(Error::Domain("embedding check needs d_small in {1, 2, 4}".into()));
    }
    if w.bias().is_some() {
        return Err(Error::Domain("embedding check expects a bias-free weight".into()));
    }
    let native = hconv2d(x, w, stride, padding)?;
    let embedded = hconv2d(&embed_tensor(x)?, &embed_weight(w)?, stride, padding)?;
    let mut max_abs_diff = 0.0f64;
    for k in 0..d_small {
        let diff = native.component(k)?.max_abs_diff(&embedded.component(k)?)?;
        max_abs_diff = max_abs_diff.max(diff.as_f64());
    }
    let mut leaked_max = 0.0f64;
    for k in d_small..8 {
        for v in embedded.component(k)?.data() {
            leaked_max = leaked_max.max(v.abs().as_f64());
        }
    }
    Ok(EmbeddingReport {
        d_small,
        max_abs_diff,
        leaked_max,
    })
}
