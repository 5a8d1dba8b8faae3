//! Whitening batch normalization for packed hypercomplex activations.
//!
//! Every hypercomplex feature map is treated as a stream of `d`-vectors
//! (one per batch element and spatial position). Training-mode forward
//! centers the vectors, factors their covariance `V + eps·I = L Lᵀ` and maps
//! each vector to `L⁻¹ (x - E[x])`, which has identity covariance up to the
//! ridge. A learned symmetric `d × d` scale `γ` and shift `β` follow. With
//! `d = 1` this is ordinary batch normalization.

use crate::algebra::AlgebraDim;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{HypercomplexTensor, RealTensor};

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Row-major dense `n × n` matrix, `n <= 8` in practice.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_rows<const N: usize>(rows: [[T; N]; N]) -> Self {
        Self::from_fn(N, |i, j| rows[i][j])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// `self · v`.
    pub fn apply(&self, v: &[T], out: &mut [T]) {
        for i in 0..self.n {
            let row = &self.data[i * self.n..][..self.n];
            out[i] = row.iter().zip(v).map(|(&a, &b)| a * b).sum();
        }
    }

    pub fn add_diagonal(&self, eps: T) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            m.data[i * self.n + i] += eps;
        }
        m
    }

    pub fn frobenius_distance(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Solves `L y = b` in place for lower-triangular `self`.
    pub fn forward_solve(&self, b: &mut [T]) {
        for i in 0..self.n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.get(i, k) * b[k];
            }
            b[i] = s / self.get(i, i);
        }
    }

    /// Solves `Lᵀ y = b` in place for lower-triangular `self`.
    pub fn backward_solve_transposed(&self, b: &mut [T]) {
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..self.n {
                s -= self.get(k, i) * b[k];
            }
            b[i] = s / self.get(i, i);
        }
    }

    /// Inverse of a lower-triangular matrix (itself lower triangular).
    pub fn lower_inverse(&self) -> Self {
        let n = self.n;
        let mut inv = Self::zeros(n);
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = T::zero());
            col[j] = T::one();
            self.forward_solve(&mut col);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }
}

/// Cholesky factor `L` (lower triangular, positive diagonal) with
/// `L Lᵀ = m + eps·I`, using the row-by-row recurrence
/// `L_jj = sqrt(m_jj + eps - Σ_k L_jk²)`, `L_ij = (m_ij - Σ_k L_ik L_jk) / L_jj`.
pub fn cholesky<T: Scalar>(m: &SquareMatrix<T>, eps: T) -> Result<SquareMatrix<T>> {
    let n = m.n();
    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut pivot = m.get(j, j) + eps;
        for k in 0..j {
            pivot -= l.get(j, k) * l.get(j, k);
        }
        if !(pivot > T::zero()) {
            return Err(Error::NumericalDomain(format!(
                "non-positive pivot {pivot} at row {j} of the Cholesky factorization"
            )));
        }
        let diag = pivot.sqrt();
        l.set(j, j, diag);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / diag);
        }
    }
    Ok(l)
}

/// Cholesky factor of an `8 × 8` symmetric matrix plus ridge.
pub fn cholesky8<T: Scalar>(m: &[[T; 8]; 8], eps: T) -> Result<[[T; 8]; 8]> {
    let l = cholesky(&SquareMatrix::from_rows(*m), eps)?;
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| l.get(i, j))))
}

/// Per-feature mean vector and covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats<T> {
    pub mean: Vec<T>,
    pub cov: SquareMatrix<T>,
}

impl<T: Scalar> FeatureStats<T> {
    pub fn whitening(&self, eps: T) -> Result<Whitening<T>> {
        Ok(Whitening {
            mean: self.mean.clone(),
            chol: cholesky(&self.cov, eps)?,
        })
    }
}

/// Mean and Cholesky factor used to whiten one feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Whitening<T> {
    pub mean: Vec<T>,
    pub chol: SquareMatrix<T>,
}

/// Sample index layout: feature `f`, component `k` lives in channel `k*F + f`.
struct FeatureView {
    batch: usize,
    features: usize,
    plane: usize,
    dim: usize,
}

impl FeatureView {
    fn of<T: Scalar>(x: &HypercomplexTensor<T>) -> Self {
        let (n, _, h, w) = x.inner().dims4().expect("rank-4 tensor");
        Self {
            batch: n,
            features: x.component_channels(),
            plane: h * w,
            dim: x.dim().get(),
        }
    }

    fn samples(&self) -> usize {
        self.batch * self.plane
    }

    #[inline]
    fn offset(&self, b: usize, k: usize, f: usize) -> usize {
        ((b * self.dim + k) * self.features + f) * self.plane
    }

    /// Copies feature `f` into a `samples × dim` row-major buffer.
    fn gather<T: Scalar>(&self, data: &[T], f: usize, out: &mut Vec<T>) {
        out.clear();
        out.resize(self.samples() * self.dim, T::zero());
        for b in 0..self.batch {
            for k in 0..self.dim {
                let src = &data[self.offset(b, k, f)..][..self.plane];
                for (p, &v) in src.iter().enumerate() {
                    out[(b * self.plane + p) * self.dim + k] = v;
                }
            }
        }
    }

    fn scatter<T: Scalar>(&self, buf: &[T], f: usize, data: &mut [T]) {
        for b in 0..self.batch {
            for k in 0..self.dim {
                let dst = &mut data[self.offset(b, k, f)..][..self.plane];
                for (p, v) in dst.iter_mut().enumerate() {
                    *v = buf[(b * self.plane + p) * self.dim + k];
                }
            }
        }
    }
}

fn stats_of_rows<T: Scalar>(rows: &[T], dim: usize) -> FeatureStats<T> {
    let s = rows.len() / dim;
    let inv = T::one() / T::from_usize_lossy(s);
    let mut mean = vec![T::zero(); dim];
    for r in rows.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv);
    let mut cov = SquareMatrix::zeros(dim);
    let mut c = vec![T::zero(); dim];
    for r in rows.chunks_exact(dim) {
        for k in 0..dim {
            c[k] = r[k] - mean[k];
        }
        for i in 0..dim {
            for j in 0..=i {
                cov.data[i * dim + j] += c[i] * c[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            let v = cov.get(i, j) * inv;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    FeatureStats { mean, cov }
}

/// Mean and (biased, `1/n`) covariance of every feature, pooled over batch
/// and spatial positions.
pub fn batch_statistics<T: Scalar>(x: &HypercomplexTensor<T>) -> Result<Vec<FeatureStats<T>>> {
    let view = FeatureView::of(x);
    if view.samples() < 2 {
        return Err(Error::DegenerateStatistics(format!(
            "need at least 2 samples per feature, got {}",
            view.samples()
        )));
    }
    let mut buf = Vec::new();
    Ok((0..view.features)
        .map(|f| {
            view.gather(x.inner().data(), f, &mut buf);
            stats_of_rows(&buf, view.dim)
        })
        .collect())
}

/// Maps every feature vector to `L⁻¹ (x - mean)`.
pub fn whiten<T: Scalar>(x: &HypercomplexTensor<T>, whitening: &[Whitening<T>]) -> Result<HypercomplexTensor<T>> {
    let view = FeatureView::of(x);
    if whitening.len() != view.features {
        return Err(Error::Shape(format!(
            "{} whitening transforms for {} features",
            whitening.len(),
            view.features
        )));
    }
    let mut out = x.inner().clone();
    let mut buf = Vec::new();
    for (f, w) in whitening.iter().enumerate() {
        view.gather(x.inner().data(), f, &mut buf);
        for r in buf.chunks_exact_mut(view.dim) {
            for (v, &m) in r.iter_mut().zip(&w.mean) {
                *v -= m;
            }
            w.chol.forward_solve(r);
        }
        view.scatter(&buf, f, out.data_mut());
    }
    HypercomplexTensor::new(out, x.dim())
}

/// Learned symmetric scale and shift applied after whitening.
///
/// `γ` is stored as its `d(d+1)/2` upper-triangular entries per feature, so
/// the materialized matrix is symmetric by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct WhiteningAffine<T> {
    dim: usize,
    features: usize,
    gamma: Vec<T>,
    beta: Vec<T>,
}

#[inline]
fn upper_index(dim: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * dim - a * (a + 1) / 2 + b
}

impl<T: Scalar> WhiteningAffine<T> {
    /// `γ` diagonal `1/√d`, off-diagonal zero, `β = 0`.
    pub fn new(dim: AlgebraDim, features: usize) -> Self {
        let d = dim.get();
        let per = d * (d + 1) / 2;
        let mut gamma = vec![T::zero(); features * per];
        let diag = T::one() / T::from_usize_lossy(d).sqrt();
        for f in 0..features {
            for a in 0..d {
                gamma[f * per + upper_index(d, a, a)] = diag;
            }
        }
        Self {
            dim: d,
            features,
            gamma,
            beta: vec![T::zero(); features * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn gamma_per_feature(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn gamma_params(&self) -> &[T] {
        &self.gamma
    }

    pub fn gamma_params_mut(&mut self) -> &mut [T] {
        &mut self.gamma
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    pub fn beta_mut(&mut self) -> &mut [T] {
        &mut self.beta
    }

    pub fn gamma_matrix(&self, f: usize) -> SquareMatrix<T> {
        let per = self.gamma_per_feature();
        let g = &self.gamma[f * per..][..per];
        SquareMatrix::from_fn(self.dim, |a, b| g[upper_index(self.dim, a, b)])
    }

    pub fn set_gamma(&mut self, f: usize, a: usize, b: usize, v: T) {
        let per = self.gamma_per_feature();
        self.gamma[f * per + upper_index(self.dim, a, b)] = v;
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

/// Batch and running statistics of a whitening layer.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenState<T> {
    pub eps: T,
    pub momentum: T,
    /// Whitening transforms of the most recent training batch.
    pub batch: Vec<Whitening<T>>,
    pub running_mean: Vec<Vec<T>>,
    pub running_cov: Vec<SquareMatrix<T>>,
    /// Number of training batches folded into the running statistics.
    pub observed: u64,
}

impl<T: Scalar> WhitenState<T> {
    pub fn new(dim: AlgebraDim, features: usize) -> Self {
        let d = dim.get();
        Self {
            eps: T::lit(DEFAULT_EPS),
            momentum: T::lit(DEFAULT_MOMENTUM),
            batch: Vec::new(),
            running_mean: vec![vec![T::zero(); d]; features],
            running_cov: vec![SquareMatrix::identity(d); features],
            observed: 0,
        }
    }

    pub fn with_eps(mut self, eps: T) -> Self {
        self.eps = eps;
        self
    }

    /// Computes batch statistics, stores their whitening transforms and folds
    /// them into the running averages. The first batch initializes the
    /// running statistics directly.
    pub fn observe(&mut self, x: &HypercomplexTensor<T>) -> Result<()> {
        let stats = batch_statistics(x)?;
        if stats.len() != self.running_mean.len() {
            return Err(Error::Shape(format!(
                "layer has {} features, input has {}",
                self.running_mean.len(),
                stats.len()
            )));
        }
        self.batch = stats.iter().map(|s| s.whitening(self.eps)).collect::<Result<_>>()?;
        let m = self.momentum;
        let keep = if self.observed == 0 { T::zero() } else { m };
        let take = T::one() - keep;
        for (f, s) in stats.iter().enumerate() {
            for (r, &v) in self.running_mean[f].iter_mut().zip(&s.mean) {
                *r = keep * *r + take * v;
            }
            for (r, &v) in self.running_cov[f].data.iter_mut().zip(&s.cov.data) {
                *r = keep * *r + take * v;
            }
        }
        self.observed += 1;
        Ok(())
    }

    pub fn running_whitening(&self) -> Result<Vec<Whitening<T>>> {
        if self.observed == 0 {
            return Err(Error::UninitializedStatistics);
        }
        self.running_mean
            .iter()
            .zip(&self.running_cov)
            .map(|(m, c)| {
                Ok(Whitening {
                    mean: m.clone(),
                    chol: cholesky(c, self.eps)?,
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Applies `γ x̃ + β` per feature.
pub fn apply_affine<T: Scalar>(x: &HypercomplexTensor<T>, affine: &WhiteningAffine<T>) -> Result<HypercomplexTensor<T>> {
    let view = FeatureView::of(x);
    if affine.features() != view.features || affine.dim() != view.dim {
        return Err(Error::Shape(format!(
            "affine parameters for {} features of dim {}, input has {} features of dim {}",
            affine.features(),
            affine.dim(),
            view.features,
            view.dim
        )));
    }
    let mut out = x.inner().clone();
    let mut buf = Vec::new();
    let mut tmp = vec![T::zero(); view.dim];
    for f in 0..view.features {
        let g = affine.gamma_matrix(f);
        let beta = &affine.beta()[f * view.dim..][..view.dim];
        view.gather(x.inner().data(), f, &mut buf);
        for r in buf.chunks_exact_mut(view.dim) {
            g.apply(r, &mut tmp);
            for ((v, &t), &b) in r.iter_mut().zip(&tmp).zip(beta) {
                *v = t + b;
            }
        }
        view.scatter(&buf, f, out.data_mut());
    }
    HypercomplexTensor::new(out, x.dim())
}

/// Whitening batch normalization forward pass. Training mode whitens with the
/// batch statistics and updates the running statistics; inference mode
/// whitens with the running statistics.
pub fn octonion_bn_forward<T: Scalar>(
    x: &HypercomplexTensor<T>,
    affine: &WhiteningAffine<T>,
    state: &mut WhitenState<T>,
    mode: Mode,
) -> Result<HypercomplexTensor<T>> {
    let whitened = match mode {
        Mode::Train => {
            state.observe(x)?;
            whiten(x, &state.batch)?
        }
        Mode::Infer => whiten(x, &state.running_whitening()?)?,
    };
    apply_affine(&whitened, affine)
}

/// Per-feature values kept from a training forward pass for backprop.
#[derive(Clone, Debug)]
struct FeatureCache<T> {
    chol: SquareMatrix<T>,
    /// whitened rows, `samples × d`
    white: Vec<T>,
    /// centered rows, `samples × d`
    centered: Vec<T>,
}

/// Whitening batch-normalization layer with its parameters, statistics and
/// gradient buffers.
#[derive(Clone, Debug)]
pub struct WhiteningBatchNorm<T> {
    dim: AlgebraDim,
    pub affine: WhiteningAffine<T>,
    pub state: WhitenState<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
    cache: Option<(Vec<FeatureCache<T>>, Vec<usize>)>,
}

impl<T: Scalar> WhiteningBatchNorm<T> {
    pub fn new(dim: AlgebraDim, channels: usize) -> Result<Self> {
        if channels % dim.get() != 0 {
            return Err(Error::Shape(format!(
                "{channels} channels not divisible by algebra dimension {dim}"
            )));
        }
        let features = channels / dim.get();
        let affine = WhiteningAffine::new(dim, features);
        Ok(Self {
            dim,
            grad_gamma: vec![T::zero(); affine.gamma_params().len()],
            grad_beta: vec![T::zero(); affine.beta().len()],
            affine,
            state: WhitenState::new(dim, features),
            cache: None,
        })
    }

    pub fn dim(&self) -> AlgebraDim {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        self.affine.param_count()
    }

    /// Running-statistic scalars: `d` mean entries plus `d(d+1)/2` distinct
    /// covariance entries per feature.
    pub fn buffer_count(&self) -> usize {
        let d = self.dim.get();
        self.affine.features() * (d + d * (d + 1) / 2)
    }

    pub fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let hx = HypercomplexTensor::new(x.clone(), self.dim)?;
        match mode {
            Mode::Infer => {
                self.cache = None;
                Ok(octonion_bn_forward(&hx, &self.affine, &mut self.state, Mode::Infer)?.into_inner())
            }
            Mode::Train => {
                self.state.observe(&hx)?;
                let view = FeatureView::of(&hx);
                let d = view.dim;
                let mut out = x.clone();
                let mut caches = Vec::with_capacity(view.features);
                let mut buf = Vec::new();
                let mut tmp = vec![T::zero(); d];
                for f in 0..view.features {
                    let w = &self.state.batch[f];
                    view.gather(x.data(), f, &mut buf);
                    for r in buf.chunks_exact_mut(d) {
                        for (v, &m) in r.iter_mut().zip(&w.mean) {
                            *v -= m;
                        }
                    }
                    let centered = buf.clone();
                    for r in buf.chunks_exact_mut(d) {
                        w.chol.forward_solve(r);
                    }
                    let white = buf.clone();
                    let g = self.affine.gamma_matrix(f);
                    let beta = &self.affine.beta()[f * d..][..d];
                    for r in buf.chunks_exact_mut(d) {
                        g.apply(r, &mut tmp);
                        for ((v, &t), &b) in r.iter_mut().zip(&tmp).zip(beta) {
                            *v = t + b;
                        }
                    }
                    view.scatter(&buf, f, out.data_mut());
                    caches.push(FeatureCache {
                        chol: w.chol.clone(),
                        white,
                        centered,
                    });
                }
                self.cache = Some((caches, x.shape().to_vec()));
                Ok(out)
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient of the
    /// most recent training-mode forward pass.
    pub fn backward(&mut self, grad_out: &RealTensor<T>) -> Result<RealTensor<T>> {
        let (caches, shape) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Domain("backward called without a training forward pass".into()))?;
        if grad_out.shape() != shape.as_slice() {
            return Err(Error::Shape(format!(
                "gradient shape {:?} does not match forward shape {shape:?}",
                grad_out.shape()
            )));
        }
        let hg = HypercomplexTensor::new(grad_out.clone(), self.dim)?;
        let view = FeatureView::of(&hg);
        let d = view.dim;
        let s = view.samples();
        let inv_s = T::one() / T::from_usize_lossy(s);
        let per = self.affine.gamma_per_feature();
        let mut grad_in = RealTensor::zeros(shape);
        let mut g_rows = Vec::new();
        for (f, cache) in caches.iter().enumerate() {
            view.gather(grad_out.data(), f, &mut g_rows);
            let gamma = self.affine.gamma_matrix(f);

            // affine parameters
            let mut g_gamma = SquareMatrix::zeros(d);
            for (go, y) in g_rows.chunks_exact(d).zip(cache.white.chunks_exact(d)) {
                for a in 0..d {
                    self.grad_beta[f * d + a] += go[a];
                    for b in 0..d {
                        g_gamma.data[a * d + b] += go[a] * y[b];
                    }
                }
            }
            for a in 0..d {
                for b in a..d {
                    let v = if a == b {
                        g_gamma.get(a, a)
                    } else {
                        g_gamma.get(a, b) + g_gamma.get(b, a)
                    };
                    self.grad_gamma[f * per + upper_index(d, a, b)] += v;
                }
            }

            // gradient w.r.t. whitened rows: γᵀ g = γ g
            let mut g_white = vec![T::zero(); s * d];
            for (gw, go) in g_white.chunks_exact_mut(d).zip(g_rows.chunks_exact(d)) {
                gamma.apply(go, gw);
            }

            // y = L⁻¹ c: direct term L⁻ᵀ ȳ, and L̄ = -L⁻ᵀ Σ ȳ yᵀ
            let l = &cache.chol;
            let mut m = SquareMatrix::zeros(d);
            for (gw, y) in g_white.chunks_exact(d).zip(cache.white.chunks_exact(d)) {
                for a in 0..d {
                    for b in 0..d {
                        m.data[a * d + b] += gw[a] * y[b];
                    }
                }
            }
            let l_inv = l.lower_inverse();
            let l_inv_t = l_inv.transpose();
            let mut l_bar = l_inv_t.matmul(&m);
            for a in 0..d {
                for b in 0..d {
                    let v = if b <= a { -l_bar.get(a, b) } else { T::zero() };
                    l_bar.set(a, b, v);
                }
            }
            // Cholesky adjoint: Σ̄ = L⁻ᵀ sym(Φ(Lᵀ L̄)) L⁻¹
            let b_mat = l.transpose().matmul(&l_bar);
            let half = T::lit(0.5);
            let mut phi = SquareMatrix::zeros(d);
            for a in 0..d {
                for b in 0..a {
                    phi.set(a, b, b_mat.get(a, b));
                }
                phi.set(a, a, half * b_mat.get(a, a));
            }
            let sym = SquareMatrix::from_fn(d, |a, b| half * (phi.get(a, b) + phi.get(b, a)));
            let sigma_bar = l_inv_t.matmul(&sym).matmul(&l_inv);

            // Σ = (1/S) Σ c cᵀ + eps I  =>  c̄ += (2/S) Σ̄ c
            let two_over_s = (T::one() + T::one()) * inv_s;
            let mut c_bar = g_white;
            let mut tmp = vec![T::zero(); d];
            for (cb, c) in c_bar.chunks_exact_mut(d).zip(cache.centered.chunks_exact(d)) {
                l.backward_solve_transposed(cb);
                sigma_bar.apply(c, &mut tmp);
                for (v, &t) in cb.iter_mut().zip(&tmp) {
                    *v += two_over_s * t;
                }
            }
            // c = x - mean(x)
            let mut mean_bar = vec![T::zero(); d];
            for cb in c_bar.chunks_exact(d) {
                for (m, &v) in mean_bar.iter_mut().zip(cb) {
                    *m += v;
                }
            }
            for cb in c_bar.chunks_exact_mut(d) {
                for (v, &m) in cb.iter_mut().zip(&mean_bar) {
                    *v -= m * inv_s;
                }
            }
            view.scatter(&c_bar, f, grad_in.data_mut());
        }
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.iter_mut().for_each(|g| *g = T::zero());
        self.grad_beta.iter_mut().for_each(|g| *g = T::zero());
    }
}
