//! Property suites behind the `verify-*` and `gradcheck` commands.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::algebra::{subalgebra_table, AlgebraDim, Octonion};
use crate::batchnorm::{batch_statistics, whiten, Mode, SquareMatrix, WhiteningBatchNorm, DEFAULT_EPS};
use crate::conv::{embed_subalgebra_check, hconv2d, hconv2d_by_components, BlockWeight};
use crate::dataset::{synthetic_blobs, BlobSpec};
use crate::error::Result;
use crate::init::{
    init_weight, magnitude_cdf_quadrature, sample_magnitude, second_moment_check, spherical_jacobian,
    spherical_to_cartesian, Criterion, InitSpec, PhaseLaw,
};
use crate::network::{gradcheck, GradcheckOptions, GradcheckReport, Network, NetworkConfig};
use crate::tensor::{unpack, HypercomplexTensor, Padding, RealTensor};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.into(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, check: Check) {
        self.checks.push(check);
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{}: {} checks, {failed} failed", self.suite, self.checks.len())
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_octonion(rng: &mut impl Rng) -> Octonion<f64> {
    Octonion::new(std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
}

fn max_diff(a: &Octonion<f64>, b: &Octonion<f64>) -> f64 {
    a.c.iter().zip(&b.c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// Unit products transcribed row by row, row e_i times column e_j.
const UNIT_TABLE: [&str; 8] = [
    "1 e1 e2 e3 e4 e5 e6 e7",
    "e1 -1 e3 -e2 e5 -e4 -e7 e6",
    "e2 -e3 -1 e1 e6 e7 -e4 -e5",
    "e3 e2 -e1 -1 e7 -e6 e5 -e4",
    "e4 -e5 -e6 -e7 -1 e1 e2 e3",
    "e5 e4 -e7 e6 -e1 -1 -e3 e2",
    "e6 e7 e4 -e5 -e2 e3 -1 -e1",
    "e7 -e6 e5 e4 -e3 -e2 e1 -1",
];

/// `(sign, index)` for every entry of the transcribed table.
pub fn transcribed_unit_table() -> [[(i8, usize); 8]; 8] {
    let mut out = [[(0i8, 0usize); 8]; 8];
    for (i, row) in UNIT_TABLE.iter().enumerate() {
        for (j, tok) in row.split_whitespace().enumerate() {
            let (sign, unit) = match tok.strip_prefix('-') {
                Some(rest) => (-1, rest),
                None => (1, tok),
            };
            let index = match unit {
                "1" => 0,
                e => e[1..].parse().expect("unit name"),
            };
            out[i][j] = (sign, index);
        }
    }
    out
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> RealTensor<f64> {
    RealTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn random_weight(rng: &mut impl Rng, d: usize, o: usize, i: usize, k: usize) -> BlockWeight<f64> {
    BlockWeight::new((0..d).map(|_| random_tensor(rng, &[o, i, k, k])).collect(), None).expect("consistent shapes")
}

/// Max-abs discrepancy between the block-matrix path, the component path and,
/// for a 1×1 kernel, pixelwise octonion products, over `instances` random
/// convolutions with up to 8 octonion channels on 8×8 inputs.
pub fn conv_path_agreement(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = AlgebraDim::OCTONION;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (ci, co) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let stride = rng.random_range(1..=2);
        let x = HypercomplexTensor::new(random_tensor(&mut rng, &[2, 8 * ci, 8, 8]), dim)?;
        let w = random_weight(&mut rng, 8, co, ci, 3);
        let a = hconv2d(&x, &w, stride, Padding::Same)?;
        let b = hconv2d_by_components(&x, &w, stride, Padding::Same)?;
        worst = worst.max(a.inner().max_abs_diff(b.inner())?);

        let w1 = random_weight(&mut rng, 8, co, ci, 1);
        let y = unpack(&hconv2d(&x, &w1, 1, Padding::Valid)?);
        let y2 = unpack(&hconv2d_by_components(&x, &w1, 1, Padding::Valid)?);
        let xs = unpack(&x);
        let plane = 64;
        for n in 0..2 {
            for pix in 0..plane {
                for o in 0..co {
                    let mut acc = Octonion::<f64>::zero();
                    for i in 0..ci {
                        let wo = Octonion::new(std::array::from_fn(|p| w1.components()[p].data()[o * ci + i]));
                        let xo = Octonion::new(std::array::from_fn(|q| xs[q].data()[(n * ci + i) * plane + pix]));
                        acc = acc + wo * xo;
                    }
                    for r in 0..8 {
                        let at = (n * co + o) * plane + pix;
                        worst = worst.max((y[r].data()[at] - acc.c[r]).abs());
                        worst = worst.max((y2[r].data()[at] - acc.c[r]).abs());
                    }
                }
            }
        }
    }
    Ok(worst)
}

pub fn verify_algebra(seed: u64, conv_instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("verify-algebra");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let table = transcribed_unit_table();
    let mut mismatches = 0;
    for (i, row) in table.iter().enumerate() {
        for (j, &(sign, index)) in row.iter().enumerate() {
            let p = Octonion::<f64>::basis(i) * Octonion::<f64>::basis(j);
            let got: [i64; 8] = p.c.map(|v| v as i64);
            let want: [i64; 8] = std::array::from_fn(|k| if k == index { i64::from(sign) } else { 0 });
            if got != want || p.c.iter().any(|v| v.fract() != 0.0) {
                mismatches += 1;
            }
        }
    }
    rep.push(Check::new("unit-table", mismatches == 0, format!("{mismatches} of 64 unit products differ")));

    let mut closed = true;
    for d in [1, 2, 4] {
        let t = subalgebra_table(d)?;
        closed &= (0..d).all(|i| (0..d).all(|j| t.index(i, j) < d));
    }
    rep.push(Check::new("subalgebra-closure", closed, "real, complex and quaternion units close under products".into()));

    let (mut conj, mut comp, mut alt, mut inv) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (x, y) = (random_octonion(&mut rng), random_octonion(&mut rng));
        conj = conj.max(max_diff(&(x * x.conjugate()), &Octonion::real(x.norm_sqr())));
        comp = comp.max(((x * y).norm() - x.norm() * y.norm()).abs());
        alt = alt.max(max_diff(&((x * x) * y), &(x * (x * y))));
        alt = alt.max(max_diff(&((y * x) * x), &(y * (x * x))));
        inv = inv.max(max_diff(&(x * x.inverse()?), &Octonion::one()));
    }
    rep.push(Check::new("conjugate-norm", conj <= 1e-12, format!("max |x x* - |x|^2| = {conj:.2e}")));
    rep.push(Check::new("norm-composition", comp <= 1e-12, format!("max ||xy| - |x||y|| = {comp:.2e}")));
    rep.push(Check::new("alternativity", alt <= 1e-12, format!("max alternator = {alt:.2e}")));
    rep.push(Check::new("inverse", inv <= 1e-12, format!("max |x x^-1 - 1| = {inv:.2e}")));

    let e = |i| Octonion::<f64>::basis(i);
    let left = (e(1) * e(2)) * e(4);
    let right = e(1) * (e(2) * e(4));
    let noncomm = e(1) * e(2) != e(2) * e(1);
    rep.push(Check::new(
        "non-associative",
        left != right && noncomm,
        format!("(e1 e2) e4 = {:?}, e1 (e2 e4) = {:?}", left.c, right.c),
    ));

    let start = Instant::now();
    let worst = conv_path_agreement(conv_instances, seed ^ 0xc0)?;
    rep.push(Check::new(
        "conv-paths",
        worst <= 1e-12,
        format!("{conv_instances} instances, max abs diff {worst:.2e}, {:.1} s", start.elapsed().as_secs_f64()),
    ));

    let mut emb_worst = 0.0f64;
    let mut leaked = 0.0f64;
    for d in [2, 4] {
        for _ in 0..10 {
            let (ci, co) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let x = HypercomplexTensor::new(random_tensor(&mut rng, &[2, d * ci, 8, 8]), AlgebraDim::new(d)?)?;
            let w = random_weight(&mut rng, d, co, ci, 3);
            let r = embed_subalgebra_check(&x, &w, 1, Padding::Same)?;
            emb_worst = emb_worst.max(r.max_abs_diff);
            leaked = leaked.max(r.leaked_max);
        }
    }
    rep.push(Check::new(
        "subalgebra-embedding",
        emb_worst <= 1e-12 && leaked == 0.0,
        format!("max abs diff {emb_worst:.2e}, max leaked component {leaked:e}"),
    ));
    Ok(rep)
}

fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn determinant8(mut m: [[f64; 8]; 8]) -> f64 {
    let mut det = 1.0;
    for c in 0..8 {
        let p = (c..8).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).expect("nonempty");
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        if m[c][c] == 0.0 {
            return 0.0;
        }
        for r in c + 1..8 {
            let f = m[r][c] / m[c][c];
            for k in c..8 {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    det
}

/// Worst relative gap between the closed-form spherical Jacobian and the
/// finite-difference determinant at `points` random interior points.
pub fn jacobian_agreement(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = std::f64::consts::PI;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let rho: f64 = rng.random_range(0.5..2.0);
        let mut phi = [0.0; 7];
        for p in phi.iter_mut().take(6) {
            *p = rng.random_range(0.2..pi - 0.2);
        }
        phi[6] = rng.random_range(0.2..2.0 * pi - 0.2);
        let h = 1e-6;
        let mut jac = [[0.0; 8]; 8];
        for col in 0..8 {
            let at = |delta: f64| {
                let (mut r, mut p) = (rho, phi);
                if col == 0 {
                    r += delta;
                } else {
                    p[col - 1] += delta;
                }
                spherical_to_cartesian(r, &p)
            };
            let (a, b) = (at(h), at(-h));
            for row in 0..8 {
                jac[row][col] = (a[row] - b[row]) / (2.0 * h);
            }
        }
        let closed = spherical_jacobian(rho, &std::array::from_fn(|i| phi[i]));
        worst = worst.max(((determinant8(jac) - closed) / closed).abs());
    }
    worst
}

/// Component variances of `entries` octonion weights drawn for the given
/// fans, as `(total variance, max/min component variance - 1)`.
pub fn calibration(criterion: Criterion, n_in: usize, n_out: usize, entries: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = InitSpec::new(criterion, n_in, n_out)?;
    let w = init_weight::<f64, _>(&spec, 8 * entries, 8, 1, PhaseLaw::Isotropic, &mut rng)?;
    let vars: Vec<f64> = w
        .components()
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let m = c.data().iter().sum::<f64>() / n;
            c.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        })
        .collect();
    let (lo, hi) = vars.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok((vars.iter().sum(), hi / lo - 1.0))
}

pub fn verify_init(seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("verify-init");
    for criterion in [Criterion::He, Criterion::Glorot] {
        for n_in in [8usize, 32, 128, 512] {
            let target = criterion.target_variance(n_in, n_in)?;
            let (total, spread) = calibration(criterion, n_in, n_in, 100_000, seed ^ n_in as u64)?;
            let rel = (total / target - 1.0).abs();
            rep.push(Check::new(
                &format!("calibration-{criterion:?}-{n_in}").to_lowercase(),
                rel <= 0.05 && spread <= 0.05,
                format!("variance {total:.4e} vs {target:.4e} ({:.2}%), component spread {:.2}%", rel * 100.0, spread * 100.0),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 1.0;
    let xs: Vec<f64> = (0..100_000).map(|_| sample_magnitude(sigma, &mut rng)).collect();
    let ks = ks_distance(xs, |x| magnitude_cdf_quadrature(x, sigma));
    rep.push(Check::new("magnitude-ks", ks <= 0.01, format!("KS distance {ks:.4}")));

    let mut worst = 0.0f64;
    for s in [0.5, 1.0, 2.0] {
        worst = worst.max((second_moment_check(s)? / (8.0 * s * s) - 1.0).abs());
    }
    rep.push(Check::new("second-moment", worst <= 1e-8, format!("max relative error {worst:.2e}")));

    let jac = jacobian_agreement(100, seed);
    rep.push(Check::new("spherical-jacobian", jac <= 1e-6, format!("max relative error {jac:.2e}")));
    Ok(rep)
}

fn rotation(rng: &mut impl Rng, d: usize) -> SquareMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= n);
        cols.push(v);
    }
    SquareMatrix::from_fn(d, |i, j| cols[j][i])
}

/// `samples` octonion activations per feature with a random full covariance
/// (random rotation, eigenvalues in `[0.5, 4]`) and random mean, as an
/// `(samples, 8·features, 1, 1)` tensor.
pub fn correlated_activations(samples: usize, features: usize, seed: u64) -> Result<HypercomplexTensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 8;
    let mut t = RealTensor::zeros(&[samples, d * features, 1, 1]);
    for f in 0..features {
        let q = rotation(&mut rng, d);
        let scale: Vec<f64> = (0..d).map(|_| rng.random_range(0.5f64..4.0).sqrt()).collect();
        let a = SquareMatrix::from_fn(d, |i, j| q.get(i, j) * scale[j]);
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (mut z, mut y) = (vec![0.0; d], vec![0.0; d]);
        for b in 0..samples {
            z.iter_mut().for_each(|v| *v = normal(&mut rng));
            a.apply(&z, &mut y);
            for k in 0..d {
                t.data_mut()[b * d * features + k * features + f] = y[k] + mu[k];
            }
        }
    }
    HypercomplexTensor::new(t, AlgebraDim::OCTONION)
}

/// Worst Frobenius distance of post-whitening covariances from identity and
/// worst post-whitening mean magnitude.
pub fn whitening_quality(samples: usize, features: usize, seed: u64) -> Result<(f64, f64)> {
    let x = correlated_activations(samples, features, seed)?;
    let w: Vec<_> = batch_statistics(&x)?
        .iter()
        .map(|s| s.whitening(DEFAULT_EPS))
        .collect::<Result<_>>()?;
    let y = whiten(&x, &w)?;
    let mut frob = 0.0f64;
    let mut mean = 0.0f64;
    for s in batch_statistics(&y)? {
        frob = frob.max(s.cov.frobenius_distance(&SquareMatrix::identity(8)));
        mean = mean.max(s.mean.iter().map(|m| m * m).sum::<f64>().sqrt());
    }
    Ok((frob, mean))
}

pub fn verify_bn(seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("verify-bn");
    let (frob, mean) = whitening_quality(10_000, 4, seed)?;
    rep.push(Check::new(
        "whitening",
        frob <= 1e-3 && mean <= 1e-10,
        format!("max covariance distance {frob:.2e}, max mean {mean:.2e}"),
    ));

    // default affine: every component carries variance 1/8
    let x = correlated_activations(10_000, 2, seed ^ 1)?;
    let mut bn = WhiteningBatchNorm::<f64>::new(AlgebraDim::OCTONION, 16)?;
    let y = HypercomplexTensor::new(bn.forward(x.inner(), Mode::Train)?, AlgebraDim::OCTONION)?;
    let var_dev = batch_statistics(&y)?
        .iter()
        .flat_map(|s| (0..8).map(|k| (s.cov.get(k, k) - 0.125).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    rep.push(Check::new("default-affine", var_dev <= 1e-3, format!("max component variance deviation {var_dev:.2e}")));

    // real case reduces to classic batch normalization
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let xr = RealTensor::from_fn(&[16, 3, 2, 2], |_| 3.0 * normal(&mut rng) + 1.0);
    let mut bn1 = WhiteningBatchNorm::<f64>::new(AlgebraDim::REAL, 3)?;
    let yr = bn1.forward(&xr, Mode::Train)?;
    let mut worst = 0.0f64;
    for c in 0..3 {
        let vals: Vec<f64> = (0..16).flat_map(|n| xr.data()[(n * 3 + c) * 4..][..4].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        for n in 0..16 {
            for p in 0..4 {
                let at = (n * 3 + c) * 4 + p;
                worst = worst.max((yr.data()[at] - (xr.data()[at] - m) / (v + DEFAULT_EPS).sqrt()).abs());
            }
        }
    }
    rep.push(Check::new("real-reduction", worst <= 1e-12, format!("max deviation from (x-mu)/sqrt(var+eps): {worst:.2e}")));

    let grad = bn_gradient_error(seed ^ 3)?;
    rep.push(Check::new("gradients", grad <= 1e-4, format!("max relative error {grad:.2e}")));

    let mut fresh = WhiteningBatchNorm::<f64>::new(AlgebraDim::OCTONION, 8)?;
    let uninit = fresh.forward(&RealTensor::zeros(&[2, 8, 2, 2]), Mode::Infer).is_err();
    rep.push(Check::new("uninitialized-inference", uninit, "inference before any batch is rejected".into()));
    Ok(rep)
}

/// Central-difference check of the whitening layer for inputs, γ and β
/// under `loss = Σ probe · y`.
pub fn bn_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = RealTensor::from_fn(&[3, 16, 2, 2], |_| normal(&mut rng));
    let probe = RealTensor::from_fn(&[3, 16, 2, 2], |_| normal(&mut rng));
    let mut bn = WhiteningBatchNorm::<f64>::new(AlgebraDim::OCTONION, 16)?;
    for g in bn.affine.gamma_params_mut() {
        *g += 0.1 * normal(&mut rng);
    }
    for b in bn.affine.beta_mut() {
        *b = 0.1 * normal(&mut rng);
    }
    let loss = |bn: &mut WhiteningBatchNorm<f64>, x: &RealTensor<f64>| -> Result<f64> {
        let y = bn.forward(x, Mode::Train)?;
        Ok(y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum())
    };
    loss(&mut bn, &x)?;
    bn.zero_grad();
    let gx = bn.backward(&probe)?;
    let (gg, gb) = (bn.grad_gamma.clone(), bn.grad_beta.clone());
    let h = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst = 0.0f64;
    for i in (0..x.len()).step_by(5) {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let fd = (loss(&mut bn, &xp)? - loss(&mut bn, &xm)?) / (2.0 * h);
        worst = worst.max(rel(gx.data()[i], fd));
    }
    for i in (0..gg.len()).step_by(3) {
        bn.affine.gamma_params_mut()[i] += h;
        let lp = loss(&mut bn, &x)?;
        bn.affine.gamma_params_mut()[i] -= 2.0 * h;
        let lm = loss(&mut bn, &x)?;
        bn.affine.gamma_params_mut()[i] += h;
        worst = worst.max(rel(gg[i], (lp - lm) / (2.0 * h)));
    }
    for i in 0..gb.len() {
        bn.affine.beta_mut()[i] += h;
        let lp = loss(&mut bn, &x)?;
        bn.affine.beta_mut()[i] -= 2.0 * h;
        let lm = loss(&mut bn, &x)?;
        bn.affine.beta_mut()[i] += h;
        worst = worst.max(rel(gb[i], (lp - lm) / (2.0 * h)));
    }
    Ok(worst)
}

/// Octonion micro network for gradient checks: one shared imaginary input
/// block, one residual block per stage, 8 real channels throughout.
pub fn gradcheck_config() -> NetworkConfig {
    NetworkConfig {
        stage_filters: vec![8, 8, 8],
        batch_size: 4,
        ..NetworkConfig::micro(8, 2)
    }
}

/// Full finite-difference check of `cfg` on a batch of four 8×8 blob images.
pub fn gradcheck_suite(cfg: &NetworkConfig, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let data = synthetic_blobs::<f64>(&BlobSpec {
        samples: 4,
        classes: cfg.classes.min(2),
        channels: cfg.input_channels,
        ..BlobSpec::bundled()
    })?;
    let (x, y) = data.batch(&[0, 1, 2, 3])?;
    let mut net = Network::<f64>::build(cfg)?;
    gradcheck(&mut net, &x, &y, opts)
}
