//! Variance-calibrated initialization of hypercomplex kernels.
//!
//! An octonion weight is written in polar form `|W| (cos ψ + s sin ψ)` with a
//! unit purely imaginary direction `s`. With the magnitude distributed as the
//! length of eight independent `N(0, σ²)` coordinates, `E|W|² = 8σ²`, so `σ`
//! is chosen to make `8σ²` equal the Glorot or He target variance. Smaller
//! algebras use the same construction with `d` coordinates.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraDim, Octonion};
use crate::conv::BlockWeight;
use crate::error::{Error, Result};
use crate::quadrature;
use crate::scalar::Scalar;
use crate::tensor::RealTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Glorot,
    #[default]
    He,
}

impl Criterion {
    /// Target variance `2/(n_in+n_out)` or `2/n_in`.
    pub fn target_variance(self, n_in: usize, n_out: usize) -> Result<f64> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Domain(format!("fans must be positive, got n_in={n_in}, n_out={n_out}")));
        }
        Ok(match self {
            Criterion::Glorot => 2.0 / (n_in + n_out) as f64,
            Criterion::He => 2.0 / n_in as f64,
        })
    }
}

/// Joint law of phase and direction used by [`init_weight`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLaw {
    /// Phase and direction of an isotropic Gaussian vector: the `d`
    /// cartesian components are iid `N(0, σ²)` and share one variance.
    #[default]
    Isotropic,
    /// Phase uniform on `(-π, π]`, independent of a uniform direction. Keeps
    /// `E|W|² = dσ²` but puts half of it in the real component.
    Uniform,
}

/// Per-coordinate scale for octonion weights: `8σ² = target`.
pub fn sigma_for(criterion: Criterion, n_in: usize, n_out: usize) -> Result<f64> {
    sigma_for_dim(criterion, n_in, n_out, AlgebraDim::OCTONION)
}

/// Per-coordinate scale for a `d`-dimensional algebra: `dσ² = target`.
pub fn sigma_for_dim(criterion: Criterion, n_in: usize, n_out: usize, dim: AlgebraDim) -> Result<f64> {
    Ok((criterion.target_variance(n_in, n_out)? / dim.get() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub criterion: Criterion,
    pub n_in: usize,
    pub n_out: usize,
    pub dim: AlgebraDim,
    pub sigma: f64,
}

impl InitSpec {
    pub fn new(criterion: Criterion, n_in: usize, n_out: usize) -> Result<Self> {
        Self::for_dim(criterion, n_in, n_out, AlgebraDim::OCTONION)
    }

    pub fn for_dim(criterion: Criterion, n_in: usize, n_out: usize, dim: AlgebraDim) -> Result<Self> {
        Ok(Self {
            criterion,
            n_in,
            n_out,
            dim,
            sigma: sigma_for_dim(criterion, n_in, n_out, dim)?,
        })
    }

    /// Fans of a convolution counted in real connections, `C·k²`.
    pub fn for_conv(criterion: Criterion, dim: AlgebraDim, c_out: usize, c_in: usize, kernel: usize) -> Result<Self> {
        Self::for_dim(criterion, c_in * kernel * kernel, c_out * kernel * kernel, dim)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Length of `d` iid `N(0, σ²)` draws.
pub fn sample_magnitude_dim<R: Rng + ?Sized>(sigma: f64, dim: usize, rng: &mut R) -> f64 {
    (0..dim).map(|_| normal(rng).powi(2)).sum::<f64>().sqrt() * sigma
}

/// Chi-8 magnitude scaled by `σ`, density `x⁷ e^{-x²/2σ²} / (48σ⁸)`.
pub fn sample_magnitude<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    sample_magnitude_dim(sigma, 8, rng)
}

/// Uniform point on the unit sphere in `R^n` (normalized Gaussian vector).
pub fn sample_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform unit imaginary direction `(s₁, …, s₇)`.
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 7] {
    let v = sample_unit(7, rng);
    std::array::from_fn(|i| v[i])
}

/// Uniform phase on `(-π, π]`.
pub fn sample_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    std::f64::consts::PI - std::f64::consts::TAU * u
}

/// `|W| (cos ψ + s sin ψ)` with `s` a unit 7-vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarOctonion {
    pub magnitude: f64,
    pub phase: f64,
    pub direction: [f64; 7],
}

impl PolarOctonion {
    pub fn cartesian<T: Scalar>(&self) -> Octonion<T> {
        let (sin, cos) = self.phase.sin_cos();
        let mut c = [T::zero(); 8];
        c[0] = T::lit(self.magnitude * cos);
        for p in 0..7 {
            c[p + 1] = T::lit(self.magnitude * self.direction[p] * sin);
        }
        Octonion::new(c)
    }

    /// Polar form of a vector whose imaginary part lives in the first `d-1`
    /// imaginary units. Phase is in `[0, π]`; a zero imaginary part gets
    /// direction `e₁`.
    pub fn from_cartesian(c: &[f64]) -> Self {
        let re = c[0];
        let im_norm = c[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut direction = [0.0; 7];
        if im_norm > 0.0 {
            for (d, &x) in direction.iter_mut().zip(&c[1..]) {
                *d = x / im_norm;
            }
        } else {
            direction[0] = 1.0;
        }
        Self {
            magnitude: re.hypot(im_norm),
            phase: im_norm.atan2(re),
            direction,
        }
    }
}

/// One polar draw for a `d`-dimensional algebra, `d >= 2`.
pub fn sample_polar<R: Rng + ?Sized>(sigma: f64, dim: AlgebraDim, law: PhaseLaw, rng: &mut R) -> PolarOctonion {
    let d = dim.get();
    match law {
        PhaseLaw::Isotropic => {
            let z: Vec<f64> = (0..d).map(|_| sigma * normal(rng)).collect();
            PolarOctonion::from_cartesian(&z)
        }
        PhaseLaw::Uniform => {
            let mut direction = [0.0; 7];
            for (s, v) in direction.iter_mut().zip(sample_unit(d - 1, rng)) {
                *s = v;
            }
            PolarOctonion {
                magnitude: sample_magnitude_dim(sigma, d, rng),
                phase: sample_phase(rng),
                direction,
            }
        }
    }
}

/// Fills a `(C_out, C_in, k, k)` hypercomplex kernel entry by entry with
/// independent polar draws. Real-valued kernels (`d = 1`) get plain
/// `N(0, σ²)` entries.
pub fn init_weight<T: Scalar, R: Rng + ?Sized>(
    spec: &InitSpec,
    c_out: usize,
    c_in: usize,
    kernel: usize,
    law: PhaseLaw,
    rng: &mut R,
) -> Result<BlockWeight<T>> {
    let mut w = BlockWeight::zeros(spec.dim, c_out, c_in, kernel)?;
    let d = spec.dim.get();
    let entries = w.components()[0].len();
    let mut comps: Vec<Vec<T>> = vec![Vec::with_capacity(entries); d];
    for _ in 0..entries {
        if d == 1 {
            comps[0].push(T::lit(spec.sigma * normal(rng)));
        } else {
            let o = sample_polar(spec.sigma, spec.dim, law, rng).cartesian::<T>();
            for (k, c) in comps.iter_mut().enumerate() {
                c.push(o.c[k]);
            }
        }
    }
    let shape = w.component_shape().to_vec();
    for (dst, src) in w.components_mut().iter_mut().zip(comps) {
        *dst = RealTensor::from_vec(&shape, src)?;
    }
    Ok(w)
}

/// Hyperspherical coordinates `(ρ, φ₁..φ₇)` to the 8 cartesian coordinates
/// `(r, i, j, k, e, l, m, n)`.
pub fn spherical_to_cartesian(rho: f64, phi: &[f64; 7]) -> [f64; 8] {
    let mut out = [0.0; 8];
    let mut sines = rho;
    for p in 0..7 {
        out[p] = sines * phi[p].cos();
        sines *= phi[p].sin();
    }
    out[7] = sines;
    out
}

/// Jacobian determinant `ρ⁷ sin⁶φ₁ sin⁵φ₂ sin⁴φ₃ sin³φ₄ sin²φ₅ sin φ₆`.
pub fn spherical_jacobian(rho: f64, phi: &[f64; 6]) -> f64 {
    phi.iter()
        .enumerate()
        .fold(rho.powi(7), |acc, (p, a)| acc * a.sin().powi(6 - p as i32))
}

/// Density of the octonion magnitude, `x⁷ e^{-x²/2σ²} / (48σ⁸)`.
pub fn magnitude_pdf(x: f64, sigma: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let s2 = sigma * sigma;
    x.powi(7) * (-x * x / (2.0 * s2)).exp() / (48.0 * s2.powi(4))
}

/// Closed form of the magnitude CDF: with `t = x²/2σ²`,
/// `1 - e^{-t}(1 + t + t²/2 + t³/6)`.
pub fn magnitude_cdf(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let t = x * x / (2.0 * sigma * sigma);
    let tail = (-t).exp() * (1.0 + t + t * t / 2.0 + t * t * t / 6.0);
    (1.0 - tail).clamp(0.0, 1.0)
}

/// Magnitude CDF by adaptive quadrature of the density.
pub fn magnitude_cdf_quadrature(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let hi = x.min(20.0 * sigma);
    quadrature::integrate(|r| magnitude_pdf(r, sigma), 0.0, hi, 32, 1e-14)
}

/// `(1/48σ⁸) ∫₀^∞ x⁹ e^{-x²/2σ²} dx` by quadrature over `[0, 20σ]`; equals
/// `8σ²`.
pub fn second_moment_check(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive and finite, got {sigma}")));
    }
    // integrate in units of σ to keep the absolute tolerance meaningful
    let unit = quadrature::integrate(|u| u * u * magnitude_pdf(u, 1.0), 0.0, 20.0, 64, 1e-13);
    Ok(unit * sigma * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.total_cmp(b));
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
    }

    #[test]
    fn sigma_examples() {
        let he = sigma_for(Criterion::He, 32, 1).unwrap();
        assert!((he - 1.0 / (2.0 * 32f64.sqrt())).abs() < 1e-15);
        assert!((he - 0.088388).abs() < 1e-6);
        let g = sigma_for(Criterion::Glorot, 64, 64).unwrap();
        assert!((g - 1.0 / (2.0 * 128f64.sqrt())).abs() < 1e-15);
        let g1 = sigma_for(Criterion::Glorot, 1, 1).unwrap();
        assert!((g1 - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        assert!(matches!(sigma_for(Criterion::He, 0, 4), Err(Error::Domain(_))));
        assert!(sigma_for(Criterion::Glorot, 3, 0).is_err());
    }

    #[test]
    fn init_spec_matches_target() {
        for (c, n_in, n_out) in [(Criterion::He, 72, 144), (Criterion::Glorot, 72, 144)] {
            let s = InitSpec::new(c, n_in, n_out).unwrap();
            let want = c.target_variance(n_in, n_out).unwrap();
            assert!((8.0 * s.sigma * s.sigma - want).abs() < 1e-15);
        }
        let s = InitSpec::for_conv(Criterion::He, AlgebraDim::OCTONION, 64, 32, 3).unwrap();
        assert_eq!((s.n_in, s.n_out), (288, 576));
    }

    #[test]
    fn magnitude_degenerate_and_second_moment() {
        let mut r = rng(1);
        assert!((0..100).all(|_| sample_magnitude(0.0, &mut r) == 0.0));
        let sigma = 0.7;
        let xs: Vec<f64> = (0..100_000).map(|_| sample_magnitude(sigma, &mut r)).collect();
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((m2 / (8.0 * sigma * sigma) - 1.0).abs() < 0.03);
    }

    #[test]
    fn magnitude_matches_quadrature_cdf() {
        let mut r = rng(2);
        let sigma = 1.3;
        let xs: Vec<f64> = (0..100_000).map(|_| sample_magnitude(sigma, &mut r)).collect();
        let d = ks_distance(xs, |x| magnitude_cdf_quadrature(x, sigma));
        assert!(d <= 0.01, "KS distance {d}");
    }

    #[test]
    fn cdf_forms_agree_with_chi_squared() {
        let chi2 = ChiSquared::new(8.0).unwrap();
        for sigma in [0.2, 1.0, 3.0] {
            for i in 1..60 {
                let x = sigma * i as f64 * 0.1;
                let want = chi2.cdf(x * x / (sigma * sigma));
                assert!((magnitude_cdf(x, sigma) - want).abs() < 1e-12);
                assert!((magnitude_cdf_quadrature(x, sigma) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cdf_limits_and_monotonicity() {
        assert_eq!(magnitude_cdf(0.0, 1.0), 0.0);
        assert_eq!(magnitude_cdf_quadrature(0.0, 1.0), 0.0);
        assert!((magnitude_cdf_quadrature(1e6, 1.0) - 1.0).abs() < 1e-8);
        assert!((magnitude_cdf_quadrature(50.0, 0.5) - 1.0).abs() < 1e-8);
        let mut prev = 0.0;
        for i in 1..=120 {
            let v = magnitude_cdf_quadrature(i as f64 * 0.05, 1.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn second_moment_identity() {
        for (sigma, want) in [(1.0, 8.0), (0.5, 2.0), (2.0, 32.0)] {
            let v = second_moment_check(sigma).unwrap();
            assert!((v - want).abs() / want < 1e-8, "{sigma}: {v}");
        }
        let ratios: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|&s| second_moment_check(s).unwrap() / (s * s)).collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-10));
        assert!(second_moment_check(0.0).is_err());
    }

    #[test]
    fn direction_is_uniform_on_sphere() {
        let mut r = rng(3);
        let n = 100_000;
        let mut mean = [0.0; 7];
        let mut second = [0.0; 7];
        for _ in 0..n {
            let s = sample_direction(&mut r);
            let norm: f64 = s.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            for p in 0..7 {
                mean[p] += s[p] / n as f64;
                second[p] += s[p] * s[p] / n as f64;
            }
        }
        for p in 0..7 {
            assert!(mean[p].abs() < 0.02);
            assert!((second[p] * 7.0 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn phase_is_uniform() {
        let mut r = rng(4);
        let n = 100_000;
        let psi: Vec<f64> = (0..n).map(|_| sample_phase(&mut r)).collect();
        let pi = std::f64::consts::PI;
        assert!(psi.iter().all(|&p| p > -pi && p <= pi));
        let c = psi.iter().map(|p| p.cos()).sum::<f64>() / n as f64;
        let s2 = psi.iter().map(|p| p.sin().powi(2)).sum::<f64>() / n as f64;
        assert!(c.abs() < 0.02);
        assert!((s2 - 0.5).abs() < 0.02);
    }

    #[test]
    fn polar_cartesian_invariants() {
        let mut r = rng(5);
        for law in [PhaseLaw::Isotropic, PhaseLaw::Uniform] {
            for _ in 0..200 {
                let p = sample_polar(0.3, AlgebraDim::OCTONION, law, &mut r);
                let s: f64 = p.direction.iter().map(|x| x * x).sum();
                assert!((s - 1.0).abs() < 1e-12);
                let o = p.cartesian::<f64>();
                assert_eq!(o.c[0], p.magnitude * p.phase.cos());
                for q in 0..7 {
                    assert_eq!(o.c[q + 1], p.magnitude * p.direction[q] * p.phase.sin());
                }
                assert!((o.norm() - p.magnitude).abs() < 1e-12);
            }
        }
        let z = [0.3, -1.0, 0.5, 0.0, 2.0, -0.1, 0.7, 0.2];
        let back = PolarOctonion::from_cartesian(&z).cartesian::<f64>();
        for k in 0..8 {
            assert!((back.c[k] - z[k]).abs() < 1e-14);
        }
    }

    fn component_stats(w: &BlockWeight<f64>) -> Vec<(f64, f64)> {
        w.components().iter().map(|c| mean_var(c.data())).collect()
    }

    #[test]
    fn he_and_glorot_calibration() {
        let mut r = rng(6);
        for n_in in [8usize, 32, 128, 512] {
            for criterion in [Criterion::He, Criterion::Glorot] {
                let spec = InitSpec::new(criterion, n_in, n_in).unwrap();
                // 100_000 octonion entries as a (8·1000, 8·100, 1, 1) kernel
                let w = init_weight::<f64, _>(&spec, 8 * 1000, 8 * 100, 1, PhaseLaw::Isotropic, &mut r).unwrap();
                let stats = component_stats(&w);
                let total: f64 = stats.iter().map(|s| s.1).sum();
                let target = criterion.target_variance(n_in, n_in).unwrap();
                assert!((total / target - 1.0).abs() < 0.05, "{criterion:?} {n_in}: {total} vs {target}");
                let (lo, hi) = stats.iter().fold((f64::MAX, 0f64), |(lo, hi), s| (lo.min(s.1), hi.max(s.1)));
                assert!(hi / lo - 1.0 < 0.05);
                assert!(stats.iter().all(|s| s.0.abs() <= 3.0 * (s.1 / 100_000f64).sqrt()));
            }
        }
    }

    #[test]
    fn uniform_phase_concentrates_variance_in_real_part() {
        let mut r = rng(7);
        let spec = InitSpec::new(Criterion::He, 64, 64).unwrap();
        let w = init_weight::<f64, _>(&spec, 8 * 1000, 8 * 100, 1, PhaseLaw::Uniform, &mut r).unwrap();
        let stats = component_stats(&w);
        let s2 = spec.sigma * spec.sigma;
        let total: f64 = stats.iter().map(|s| s.1).sum();
        assert!((total / (8.0 * s2) - 1.0).abs() < 0.05);
        assert!((stats[0].1 / (4.0 * s2) - 1.0).abs() < 0.05);
        for s in &stats[1..] {
            assert!((s.1 / (4.0 * s2 / 7.0) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn smaller_algebras_and_real() {
        let mut r = rng(8);
        for dim in [AlgebraDim::REAL, AlgebraDim::COMPLEX, AlgebraDim::QUATERNION] {
            let d = dim.get();
            let spec = InitSpec::for_dim(Criterion::He, 50, 50, dim).unwrap();
            let w = init_weight::<f64, _>(&spec, d * 400, d * 250, 1, PhaseLaw::Isotropic, &mut r).unwrap();
            assert_eq!(w.components().len(), d);
            let total: f64 = component_stats(&w).iter().map(|s| s.1).sum();
            assert!((total / 0.04 - 1.0).abs() < 0.05, "d={d}: {total}");
        }
    }

    #[test]
    fn seed_determinism() {
        let spec = InitSpec::new(Criterion::Glorot, 27, 27).unwrap();
        let a = init_weight::<f64, _>(&spec, 16, 8, 3, PhaseLaw::Isotropic, &mut rng(9)).unwrap();
        let b = init_weight::<f64, _>(&spec, 16, 8, 3, PhaseLaw::Isotropic, &mut rng(9)).unwrap();
        let c = init_weight::<f64, _>(&spec, 16, 8, 3, PhaseLaw::Isotropic, &mut rng(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let f = init_weight::<f32, _>(&spec, 16, 8, 3, PhaseLaw::Isotropic, &mut rng(9)).unwrap();
        assert_eq!(f.components()[0].data()[0], a.components()[0].data()[0] as f32);
    }

    #[test]
    fn spherical_examples() {
        let half = std::f64::consts::FRAC_PI_2;
        let v = spherical_to_cartesian(1.0, &[half; 7]);
        for (p, &x) in v.iter().enumerate().take(7) {
            assert!(x.abs() < 1e-15, "{p}");
        }
        assert!((v[7] - 1.0).abs() < 1e-15);
        let mut phi = [0.4; 7];
        phi[0] = 0.0;
        assert_eq!(spherical_to_cartesian(5.0, &phi), [5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(spherical_jacobian(1.0, &[half; 6]), 1.0);
        assert_eq!(spherical_jacobian(2.0, &[half; 6]), 128.0);
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    fn det(mut m: [[f64; 8]; 8]) -> f64 {
        let mut d = 1.0;
        for c in 0..8 {
            let p = (c..8).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            if p != c {
                m.swap(p, c);
                d = -d;
            }
            d *= m[c][c];
            for r in c + 1..8 {
                let f = m[r][c] / m[c][c];
                for k in c..8 {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
        d
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut r = rng(11);
        for _ in 0..100 {
            let rho: f64 = r.random_range(0.5..2.0);
            let mut phi = [0.0; 7];
            for p in phi.iter_mut().take(6) {
                *p = r.random_range(0.2..std::f64::consts::PI - 0.2);
            }
            phi[6] = r.random_range(0.2..std::f64::consts::TAU - 0.2);
            let h = 1e-6;
            let mut jac = [[0.0; 8]; 8];
            for col in 0..8 {
                let eval = |delta: f64| {
                    let (mut rr, mut pp) = (rho, phi);
                    if col == 0 {
                        rr += delta;
                    } else {
                        pp[col - 1] += delta;
                    }
                    spherical_to_cartesian(rr, &pp)
                };
                let (a, b) = (eval(h), eval(-h));
                for row in 0..8 {
                    jac[row][col] = (a[row] - b[row]) / (2.0 * h);
                }
            }
            let fd = det(jac);
            let closed = spherical_jacobian(rho, &std::array::from_fn(|i| phi[i]));
            assert!(((fd - closed) / closed).abs() <= 1e-6, "{fd} vs {closed}");
        }
    }

    #[test]
    fn spherical_norm_is_rho() {
        let mut r = rng(12);
        for _ in 0..100 {
            let rho: f64 = r.random_range(0.0..10.0);
            let phi: [f64; 7] = std::array::from_fn(|_| r.random_range(-4.0..4.0));
            let v = spherical_to_cartesian(rho, &phi);
            assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - rho).abs() < 1e-12);
        }
    }
}
