//! Dense row-major tensors and the packed hypercomplex view.
//!
//! Feature maps use the batch-channel-height-width layout. A hypercomplex
//! tensor with algebra dimension `d` stores component `k` in the channel slab
//! `[k * C/d, (k + 1) * C/d)`, so component 0 (the real part) comes first.

use crate::algebra::AlgebraDim;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct RealTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> RealTensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// `(batch, channels, height, width)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::Shape(format!(
                "expected a rank-4 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Copies channels `[start, start + count)` of a rank-4 tensor.
    pub fn channel_slice(&self, start: usize, count: usize) -> Result<Self> {
        let (n, c, h, w) = self.dims4()?;
        if start + count > c {
            return Err(Error::Shape(format!(
                "channel range {start}..{} exceeds {c} channels",
                start + count
            )));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * count * plane);
        for b in 0..n {
            let base = (b * c + start) * plane;
            data.extend_from_slice(&self.data[base..base + count * plane]);
        }
        Ok(Self {
            shape: vec![n, count, h, w],
            data,
        })
    }

    /// Concatenates rank-4 tensors along the channel axis.
    pub fn concat_channels(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot concatenate zero tensors".into()))?;
        let (n, _, h, w) = first.dims4()?;
        let mut total = 0;
        for p in parts {
            let (pn, pc, ph, pw) = p.dims4()?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(Error::Shape(format!(
                    "cannot concatenate {:?} with {:?}",
                    first.shape, p.shape
                )));
            }
            total += pc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for p in parts {
                let pc = p.shape[1];
                let base = b * pc * plane;
                data.extend_from_slice(&p.data[base..base + pc * plane]);
            }
        }
        Ok(Self {
            shape: vec![n, total, h, w],
            data,
        })
    }
}

/// Spatial padding of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Padding {
    /// `(k - 1) / 2` zeros on each side; output extent equals input extent at stride 1.
    #[default]
    Same,
    /// No padding.
    Valid,
}

impl Padding {
    pub fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::Same => (kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }
}

/// Geometry of a 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(x_shape: &[usize], w_shape: &[usize], stride: usize, padding: Padding) -> Result<Self> {
        let (batch, c_in, h, w) = match *x_shape {
            [n, c, h, w] => (n, c, h, w),
            _ => return Err(Error::Shape(format!("input must be rank 4, got {x_shape:?}"))),
        };
        let (c_out, wc_in, kh, kw) = match *w_shape {
            [o, i, kh, kw] => (o, i, kh, kw),
            _ => return Err(Error::Shape(format!("kernel must be rank 4, got {w_shape:?}"))),
        };
        if stride == 0 {
            return Err(Error::Domain("stride must be at least 1".into()));
        }
        if wc_in != c_in {
            return Err(Error::Shape(format!(
                "kernel expects {wc_in} input channels, input has {c_in}"
            )));
        }
        if kh != kw {
            return Err(Error::Shape(format!("only square kernels are supported, got {kh}x{kw}")));
        }
        let pad = padding.amount(kh);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::Shape(format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            batch,
            c_in,
            c_out,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        })
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds sample `b` of `x` into a `(c_in*kh*kw) × (oh*ow)` matrix.
    fn im2col<T: Scalar>(&self, x: &[T], b: usize, col: &mut [T]) {
        let plane = self.h * self.w;
        let cols = self.col_cols();
        for ci in 0..self.c_in {
            let src = &x[(b * self.c_in + ci) * plane..][..plane];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * cols..][..cols];
                    for oi in 0..self.oh {
                        let yi = (oi * self.stride + ki) as isize - self.pad as isize;
                        for oj in 0..self.ow {
                            let xj = (oj * self.stride + kj) as isize - self.pad as isize;
                            dst[oi * self.ow + oj] = if yi >= 0
                                && (yi as usize) < self.h
                                && xj >= 0
                                && (xj as usize) < self.w
                            {
                                src[yi as usize * self.w + xj as usize]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters a column matrix back onto sample `b`.
    fn col2im<T: Scalar>(&self, col: &[T], b: usize, x: &mut [T]) {
        let plane = self.h * self.w;
        let cols = self.col_cols();
        for ci in 0..self.c_in {
            let dst = &mut x[(b * self.c_in + ci) * plane..][..plane];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &col[row * cols..][..cols];
                    for oi in 0..self.oh {
                        let yi = (oi * self.stride + ki) as isize - self.pad as isize;
                        if yi < 0 || yi as usize >= self.h {
                            continue;
                        }
                        for oj in 0..self.ow {
                            let xj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if xj >= 0 && (xj as usize) < self.w {
                                dst[yi as usize * self.w + xj as usize] += src[oi * self.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation `y[n,o,i,j] = Σ w[o,c,p,q] x[n,c,i*s+p-pad,j*s+q-pad]`.
pub fn conv2d_real<T: Scalar>(
    x: &RealTensor<T>,
    w: &RealTensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<RealTensor<T>> {
    let g = ConvGeometry::new(x.shape(), w.shape(), stride, padding)?;
    let rows = g.col_rows();
    let cols = g.col_cols();
    let mut col = vec![T::zero(); rows * cols];
    let mut out = RealTensor::zeros(&[g.batch, g.c_out, g.oh, g.ow]);
    let wd = w.data();
    for b in 0..g.batch {
        g.im2col(x.data(), b, &mut col);
        let y = &mut out.data_mut()[b * g.c_out * cols..][..g.c_out * cols];
        for o in 0..g.c_out {
            let yrow = &mut y[o * cols..][..cols];
            let wrow = &wd[o * rows..][..rows];
            for (r, &wv) in wrow.iter().enumerate() {
                if wv == T::zero() {
                    continue;
                }
                let crow = &col[r * cols..][..cols];
                for (yv, &cv) in yrow.iter_mut().zip(crow) {
                    *yv += wv * cv;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_real`] with respect to its input and kernel.
pub fn conv2d_real_backward<T: Scalar>(
    x: &RealTensor<T>,
    w: &RealTensor<T>,
    grad_out: &RealTensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(RealTensor<T>, RealTensor<T>)> {
    let g = ConvGeometry::new(x.shape(), w.shape(), stride, padding)?;
    if grad_out.shape() != [g.batch, g.c_out, g.oh, g.ow] {
        return Err(Error::Shape(format!(
            "output gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            [g.batch, g.c_out, g.oh, g.ow]
        )));
    }
    let rows = g.col_rows();
    let cols = g.col_cols();
    let mut col = vec![T::zero(); rows * cols];
    let mut gcol = vec![T::zero(); rows * cols];
    let mut gx = RealTensor::zeros(x.shape());
    let mut gw = RealTensor::zeros(w.shape());
    let wd = w.data();
    for b in 0..g.batch {
        g.im2col(x.data(), b, &mut col);
        let gy = &grad_out.data()[b * g.c_out * cols..][..g.c_out * cols];
        gcol.iter_mut().for_each(|v| *v = T::zero());
        for o in 0..g.c_out {
            let gyrow = &gy[o * cols..][..cols];
            let wrow = &wd[o * rows..][..rows];
            let gwrow = &mut gw.data_mut()[o * rows..][..rows];
            for r in 0..rows {
                let crow = &col[r * cols..][..cols];
                let mut acc = T::zero();
                for (&a, &c) in gyrow.iter().zip(crow) {
                    acc += a * c;
                }
                gwrow[r] += acc;
                let wv = wrow[r];
                if wv != T::zero() {
                    let grow = &mut gcol[r * cols..][..cols];
                    for (gv, &a) in grow.iter_mut().zip(gyrow) {
                        *gv += wv * a;
                    }
                }
            }
        }
        g.col2im(&gcol, b, gx.data_mut());
    }
    Ok((gx, gw))
}

/// A real tensor whose channel axis holds `d` algebra components.
#[derive(Clone, Debug, PartialEq)]
pub struct HypercomplexTensor<T> {
    inner: RealTensor<T>,
    dim: AlgebraDim,
}

impl<T: Scalar> HypercomplexTensor<T> {
    pub fn new(inner: RealTensor<T>, dim: AlgebraDim) -> Result<Self> {
        let (_, c, _, _) = inner.dims4()?;
        if c % dim.get() != 0 {
            return Err(Error::Shape(format!(
                "{c} channels are not divisible by algebra dimension {dim}"
            )));
        }
        Ok(Self { inner, dim })
    }

    #[inline]
    pub fn dim(&self) -> AlgebraDim {
        self.dim
    }

    #[inline]
    pub fn inner(&self) -> &RealTensor<T> {
        &self.inner
    }

    pub fn into_inner(self) -> RealTensor<T> {
        self.inner
    }

    /// Channels per algebra component.
    pub fn component_channels(&self) -> usize {
        self.inner.shape()[1] / self.dim.get()
    }

    pub fn component(&self, k: usize) -> Result<RealTensor<T>> {
        if k >= self.dim.get() {
            return Err(Error::Domain(format!(
                "component {k} out of range for algebra dimension {}",
                self.dim
            )));
        }
        let cc = self.component_channels();
        self.inner.channel_slice(k * cc, cc)
    }
}

/// Concatenates `d` equally shaped parts along the channel axis, component 0 first.
pub fn pack<T: Scalar>(parts: &[RealTensor<T>]) -> Result<HypercomplexTensor<T>> {
    let dim = AlgebraDim::new(parts.len()).map_err(|_| Error::Arity { got: parts.len() })?;
    let shape = parts[0].shape();
    for p in &parts[1..] {
        if p.shape() != shape {
            return Err(Error::Shape(format!(
                "all parts must share one shape: {shape:?} vs {:?}",
                p.shape()
            )));
        }
    }
    HypercomplexTensor::new(RealTensor::concat_channels(parts)?, dim)
}

pub fn unpack<T: Scalar>(t: &HypercomplexTensor<T>) -> Vec<RealTensor<T>> {
    (0..t.dim().get())
        .map(|k| t.component(k).expect("component index in range"))
        .collect()
}
