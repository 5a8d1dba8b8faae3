//! End-to-end acceptance checks. Every check writes one `PASS`/`FAIL` line
//! to stdout (bypassing the test harness capture) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use octonet::algebra::{AlgebraDim, Octonion};
use octonet::batchnorm::{batch_statistics, whiten, DEFAULT_EPS};
use octonet::conv::{hconv2d, hconv2d_by_components, BlockWeight};
use octonet::harness::run::bundled;
use octonet::harness::verify::{correlated_activations, gradcheck_config, gradcheck_suite};
use octonet::harness::{self, RunReport};
use octonet::init::{
    init_weight, magnitude_cdf_quadrature, sample_magnitude, second_moment_check, spherical_jacobian,
    spherical_to_cartesian, Criterion, InitSpec, PhaseLaw,
};
use octonet::network::{evaluate, lr_at, GradcheckOptions, LayerKind, ParamClass, Schedule};
use octonet::tensor::{HypercomplexTensor, Padding, RealTensor};
use octonet::{Network, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn report(name: &str, passed: bool, detail: &str, elapsed: Duration) {
    let line = format!(
        "{} {name}: {detail} [{:.2} s]\n",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

/// Runs `check`, prints its line and fails the test on a failed check.
fn criterion(name: &str, check: impl FnOnce() -> (bool, String)) {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check));
    let elapsed = start.elapsed();
    let (passed, detail) = result.unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    report(name, passed, &detail, elapsed);
    assert!(passed, "{name}: {detail}");
}

// Unit products e_i e_j, row i, column j, as ±(k + 1) for ±e_k (e_0 = 1).
const TABLE: [[i8; 8]; 8] = [
    [1, 2, 3, 4, 5, 6, 7, 8],
    [2, -1, 4, -3, 6, -5, -8, 7],
    [3, -4, -1, 2, 7, 8, -5, -6],
    [4, 3, -2, -1, 8, -7, 6, -5],
    [5, -6, -7, -8, -1, 2, 3, 4],
    [6, 5, -8, 7, -2, -1, -4, 3],
    [7, 8, 5, -6, -3, 4, -1, -2],
    [8, -7, 6, 5, -4, -3, 2, -1],
];

// Real block matrices of hypercomplex convolution, row r, column q, as
// ±(p + 1) for ±W_p.
const BLOCK_C: [[i8; 2]; 2] = [[1, -2], [2, 1]];
const BLOCK_Q: [[i8; 4]; 4] = [[1, -2, -3, -4], [2, 1, -4, 3], [3, 4, 1, -2], [4, -3, 2, 1]];
const BLOCK_O: [[i8; 8]; 8] = [
    [1, -2, -3, -4, -5, -6, -7, -8],
    [2, 1, -4, 3, -6, 5, 8, -7],
    [3, 4, 1, -2, -7, -8, 5, 6],
    [4, -3, 2, 1, -8, 7, -6, 5],
    [5, 6, 7, 8, 1, -2, -3, -4],
    [6, -5, 8, -7, 2, 1, 4, -3],
    [7, -8, -5, 6, 3, -4, 1, 2],
    [8, 7, -6, -5, 4, 3, -2, 1],
];

fn block(d: usize) -> Vec<Vec<i8>> {
    match d {
        2 => BLOCK_C.iter().map(|r| r.to_vec()).collect(),
        4 => BLOCK_Q.iter().map(|r| r.to_vec()).collect(),
        8 => BLOCK_O.iter().map(|r| r.to_vec()).collect(),
        _ => unreachable!(),
    }
}

fn omul(a: &[f64; 8], b: &[f64; 8]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for i in 0..8 {
        for j in 0..8 {
            let e = TABLE[i][j];
            let k = e.unsigned_abs() as usize - 1;
            out[k] += f64::from(e.signum()) * a[i] * b[j];
        }
    }
    out
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> RealTensor<f64> {
    RealTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Direct convolution through a literal block matrix: output component `r`
/// sums `sign · W_p ⋆ x_q` over input components `q`. Cross-correlation with
/// zero padding `pad`.
fn block_conv_oracle(
    x: &RealTensor<f64>,
    comps: &[RealTensor<f64>],
    matrix: &[Vec<i8>],
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let d = matrix.len();
    let s = x.shape();
    let (n, h, w) = (s[0], s[2], s[3]);
    let ci = s[1] / d;
    let ks = comps[0].shape();
    let (co, k) = (ks[0], ks[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut y = vec![0.0; n * d * co * ho * wo];
    for b in 0..n {
        for r in 0..d {
            for o in 0..co {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = 0.0;
                        for q in 0..d {
                            let e = matrix[r][q];
                            let wp = &comps[e.unsigned_abs() as usize - 1];
                            let sign = f64::from(e.signum());
                            for c in 0..ci {
                                for a in 0..k {
                                    for bb in 0..k {
                                        let yy = (i * stride + a) as isize - pad as isize;
                                        let xx = (j * stride + bb) as isize - pad as isize;
                                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                            continue;
                                        }
                                        let xv = x.data()[((b * d * ci + q * ci + c) * h + yy as usize) * w + xx as usize];
                                        acc += sign * wp.data()[((o * ci + c) * k + a) * k + bb] * xv;
                                    }
                                }
                            }
                        }
                        y[((b * d * co + r * co + o) * ho + i) * wo + j] = acc;
                    }
                }
            }
        }
    }
    y
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn cayley_table_fidelity() {
    criterion("cayley table fidelity", || {
        let start = Instant::now();
        let mut mismatches = 0;
        for i in 0..8 {
            for j in 0..8 {
                let p = Octonion::<f64>::basis(i) * Octonion::<f64>::basis(j);
                let got: Vec<i64> = p.c.iter().map(|&v| v as i64).collect();
                let e = TABLE[i][j];
                let want: Vec<i64> = (0..8)
                    .map(|k| if k + 1 == e.unsigned_abs() as usize { i64::from(e.signum()) } else { 0 })
                    .collect();
                if got != want || p.c.iter().any(|v| v.fract() != 0.0) {
                    mismatches += 1;
                }
            }
        }
        let t = start.elapsed();
        (
            mismatches == 0 && t < Duration::from_secs(1),
            format!("{mismatches} of 64 products differ"),
        )
    });
}

#[test]
fn component_and_block_convolution_agree() {
    criterion("component and block convolution agree", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let dim = AlgebraDim::OCTONION;
        let matrix = block(8);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let (ci, co) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let stride = rng.random_range(1..=2);
            let xr = random_tensor(&mut rng, &[2, 8 * ci, 8, 8]);
            let x = HypercomplexTensor::new(xr.clone(), dim).unwrap();
            let comps: Vec<_> = (0..8).map(|_| random_tensor(&mut rng, &[co, ci, 3, 3])).collect();
            let w = BlockWeight::new(comps.clone(), None).unwrap();
            let a = hconv2d(&x, &w, stride, Padding::Same).unwrap();
            let b = hconv2d_by_components(&x, &w, stride, Padding::Same).unwrap();
            let oracle = block_conv_oracle(&xr, &comps, &matrix, stride, 1);
            worst = worst.max(max_abs(a.inner().data(), &oracle));
            worst = worst.max(max_abs(b.inner().data(), &oracle));

            // 1×1 kernels against pixelwise products from the unit table
            let comps1: Vec<_> = (0..8).map(|_| random_tensor(&mut rng, &[co, ci, 1, 1])).collect();
            let w1 = BlockWeight::new(comps1.clone(), None).unwrap();
            let y1 = hconv2d(&x, &w1, 1, Padding::Valid).unwrap();
            let y2 = hconv2d_by_components(&x, &w1, 1, Padding::Valid).unwrap();
            for n in 0..2 {
                for pix in 0..64 {
                    for o in 0..co {
                        let mut acc = [0.0; 8];
                        for c in 0..ci {
                            let wo: [f64; 8] = std::array::from_fn(|p| comps1[p].data()[o * ci + c]);
                            let xo: [f64; 8] = std::array::from_fn(|q| xr.data()[((n * 8 + q) * ci + c) * 64 + pix]);
                            let prod = omul(&wo, &xo);
                            acc.iter_mut().zip(prod).for_each(|(s, v)| *s += v);
                        }
                        for (r, want) in acc.iter().enumerate() {
                            let at = ((n * 8 + r) * co + o) * 64 + pix;
                            worst = worst.max((y1.inner().data()[at] - want).abs());
                            worst = worst.max((y2.inner().data()[at] - want).abs());
                        }
                    }
                }
            }
        }
        let t = start.elapsed();
        (
            worst <= 1e-12 && t < Duration::from_secs(30),
            format!("100 instances, max abs error {worst:.2e}"),
        )
    });
}

#[test]
fn subalgebra_embedding() {
    criterion("sub-algebra embedding", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut worst, mut oracle_worst, mut leaked) = (0.0f64, 0.0f64, 0.0f64);
        for d in [2usize, 4] {
            let matrix = block(d);
            for _ in 0..20 {
                let (ci, co) = (rng.random_range(1..=4), rng.random_range(1..=4));
                let xr = random_tensor(&mut rng, &[2, d * ci, 8, 8]);
                let comps: Vec<_> = (0..d).map(|_| random_tensor(&mut rng, &[co, ci, 3, 3])).collect();
                let native = hconv2d(
                    &HypercomplexTensor::new(xr.clone(), AlgebraDim::new(d).unwrap()).unwrap(),
                    &BlockWeight::new(comps.clone(), None).unwrap(),
                    1,
                    Padding::Same,
                )
                .unwrap();
                oracle_worst =
                    oracle_worst.max(max_abs(native.inner().data(), &block_conv_oracle(&xr, &comps, &matrix, 1, 1)));

                // zero-pad operands to eight components
                let plane = 64;
                let mut xe = RealTensor::zeros(&[2, 8 * ci, 8, 8]);
                for n in 0..2 {
                    let src = &xr.data()[n * d * ci * plane..][..d * ci * plane];
                    xe.data_mut()[n * 8 * ci * plane..][..d * ci * plane].copy_from_slice(src);
                }
                let mut ce = comps.clone();
                ce.resize(8, RealTensor::zeros(&[co, ci, 3, 3]));
                let emb = hconv2d(
                    &HypercomplexTensor::new(xe, AlgebraDim::OCTONION).unwrap(),
                    &BlockWeight::new(ce, None).unwrap(),
                    1,
                    Padding::Same,
                )
                .unwrap();
                for n in 0..2 {
                    let e = &emb.inner().data()[n * 8 * co * plane..][..8 * co * plane];
                    let s = &native.inner().data()[n * d * co * plane..][..d * co * plane];
                    worst = worst.max(max_abs(&e[..d * co * plane], s));
                    leaked = leaked.max(e[d * co * plane..].iter().fold(0.0, |m, v| m.max(v.abs())));
                }
            }
        }
        (
            worst <= 1e-12 && oracle_worst <= 1e-12 && leaked == 0.0,
            format!("embedded vs native {worst:.2e}, native vs block matrix {oracle_worst:.2e}, leaked {leaked:e}"),
        )
    });
}

#[test]
fn whitening_identity_covariance() {
    criterion("whitening", || {
        let features = 4;
        let x = correlated_activations(10_000, features, 11).unwrap();
        let w: Vec<_> = batch_statistics(&x)
            .unwrap()
            .iter()
            .map(|s| s.whitening(DEFAULT_EPS).unwrap())
            .collect();
        let y = whiten(&x, &w).unwrap();
        let n = 10_000;
        let (mut frob, mut mean_mag) = (0.0f64, 0.0f64);
        for f in 0..features {
            let v = |b: usize, k: usize| y.inner().data()[b * 8 * features + k * features + f];
            let mean: Vec<f64> = (0..8).map(|k| (0..n).map(|b| v(b, k)).sum::<f64>() / n as f64).collect();
            let mut dist = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    let c = (0..n).map(|b| (v(b, i) - mean[i]) * (v(b, j) - mean[j])).sum::<f64>() / n as f64;
                    let target = if i == j { 1.0 } else { 0.0 };
                    dist += (c - target).powi(2);
                }
            }
            frob = frob.max(dist.sqrt());
            mean_mag = mean_mag.max(mean.iter().map(|m| m * m).sum::<f64>().sqrt());
        }
        (
            frob <= 1e-3 && mean_mag <= 1e-10,
            format!("max Frobenius distance {frob:.2e}, max mean magnitude {mean_mag:.2e}"),
        )
    });
}

#[test]
fn initialization_calibration() {
    criterion("initialization calibration", || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst_total = 0.0f64;
        let mut worst_spread = 0.0f64;
        for n_in in [8usize, 32, 128, 512] {
            for (criterion, target) in [(Criterion::He, 2.0 / n_in as f64), (Criterion::Glorot, 2.0 / (2 * n_in) as f64)] {
                let spec = InitSpec::new(criterion, n_in, n_in).unwrap();
                let w = init_weight::<f64, _>(&spec, 8 * 1000, 8 * 100, 1, PhaseLaw::Isotropic, &mut rng).unwrap();
                let vars: Vec<f64> = w
                    .components()
                    .iter()
                    .map(|c| {
                        let n = c.len() as f64;
                        assert_eq!(c.len(), 100_000);
                        let m = c.data().iter().sum::<f64>() / n;
                        c.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
                    })
                    .collect();
                let total: f64 = vars.iter().sum();
                worst_total = worst_total.max((total / target - 1.0).abs());
                for a in &vars {
                    for b in &vars {
                        worst_spread = worst_spread.max(a / b - 1.0);
                    }
                }
            }
        }
        (
            worst_total <= 0.05 && worst_spread <= 0.05,
            format!(
                "max total-variance error {:.2}%, max component ratio gap {:.2}%",
                100.0 * worst_total,
                100.0 * worst_spread
            ),
        )
    });
}

#[test]
fn magnitude_law() {
    criterion("magnitude law", || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sigma = 0.8;
        let mut xs: Vec<f64> = (0..100_000).map(|_| sample_magnitude(sigma, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let chi2 = ChiSquared::new(8.0).unwrap();
        let (mut ks, mut cdf_gap) = (0.0f64, 0.0f64);
        for (i, &x) in xs.iter().enumerate() {
            let f = magnitude_cdf_quadrature(x, sigma);
            ks = ks.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
            if i % 1000 == 0 {
                cdf_gap = cdf_gap.max((f - chi2.cdf(x * x / (sigma * sigma))).abs());
            }
        }
        let mut moment = 0.0f64;
        for s in [0.5, 1.0, 2.0] {
            moment = moment.max((second_moment_check(s).unwrap() / (8.0 * s * s) - 1.0).abs());
        }
        (
            ks <= 0.01 && moment <= 1e-8 && cdf_gap <= 1e-9,
            format!("KS {ks:.4}, second-moment relative error {moment:.2e}, quadrature vs chi-squared {cdf_gap:.1e}"),
        )
    });
}

fn hyperspherical(rho: f64, phi: &[f64; 7]) -> [f64; 8] {
    let mut x = [0.0; 8];
    for (k, xk) in x.iter_mut().enumerate() {
        let sines: f64 = phi[..k.min(7)].iter().map(|a| a.sin()).product();
        *xk = rho * sines * if k < 7 { phi[k].cos() } else { 1.0 };
    }
    x
}

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
fn jacobian_identity() {
    criterion("jacobian identity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pi = std::f64::consts::PI;
        let (mut worst, mut map_gap) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let rho = rng.random_range(0.3..3.0);
            let mut phi = [0.0; 7];
            for p in phi.iter_mut().take(6) {
                *p = rng.random_range(0.1..pi - 0.1);
            }
            phi[6] = rng.random_range(0.1..2.0 * pi - 0.1);
            map_gap = map_gap.max(max_abs(&spherical_to_cartesian(rho, &phi), &hyperspherical(rho, &phi)));
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
                    hyperspherical(r, &p)
                };
                let (a, b) = (at(h), at(-h));
                for row in 0..8 {
                    jac[row][col] = (a[row] - b[row]) / (2.0 * h);
                }
            }
            let closed = spherical_jacobian(rho, &std::array::from_fn(|i| phi[i]));
            worst = worst.max(((det(jac) - closed) / closed).abs());
        }
        (
            worst <= 1e-6 && map_gap <= 1e-12,
            format!("100 points, max relative error {worst:.2e}"),
        )
    });
}

#[test]
fn gradient_correctness() {
    criterion("gradient correctness", || {
        let start = Instant::now();
        let cfg = gradcheck_config();
        assert!(cfg.shared_input_block && cfg.stage_blocks == [1, 1, 1] && cfg.stage_filters == [8, 8, 8]);
        assert_eq!(cfg.algebra_dim, 8);
        let rep = gradcheck_suite(&cfg, &GradcheckOptions::default()).unwrap();
        let all_classes = ParamClass::ALL.iter().all(|c| rep.class(*c).is_some_and(|r| r.checked > 0));
        let summary: Vec<String> = rep
            .classes
            .iter()
            .map(|c| format!("{:?} {:.1e} ({} checked, {} skipped)", c.class, c.max_rel_err, c.checked, c.skipped))
            .collect();
        (
            rep.passed() && all_classes && start.elapsed() < Duration::from_secs(300),
            summary.join(", "),
        )
    });
}

#[test]
fn parameter_counts() {
    criterion("parameter counts", || {
        let build = |d: usize| {
            Network::<f64>::build(&NetworkConfig {
                algebra_dim: d,
                ..NetworkConfig::default()
            })
            .unwrap()
        };
        let nets: Vec<_> = [1, 2, 4, 8].iter().map(|&d| (d, build(d))).collect();
        let totals: Vec<usize> = nets.iter().map(|(_, n)| n.param_counts().total).collect();
        let octonion = totals[3] as f64;
        let within = (octonion / 481_150.0 - 1.0).abs() <= 0.05;
        let monotone = totals.windows(2).all(|w| w[0] > w[1]);
        let stage_convs = |net: &Network<f64>| -> Vec<(String, usize)> {
            net.layer_info()
                .into_iter()
                .filter(|l| l.name.starts_with("stage") && matches!(l.kind, LayerKind::Hconv | LayerKind::RealConv))
                .map(|l| (l.name, l.params))
                .collect()
        };
        let real = stage_convs(&nets[0].1);
        let mut scaling = !real.is_empty();
        for (d, net) in &nets[1..] {
            let convs = stage_convs(net);
            scaling &= convs.len() == real.len()
                && convs.iter().zip(&real).all(|((na, pa), (nb, pb))| na == nb && pa * d == *pb);
        }
        (
            within && monotone && scaling,
            format!(
                "octonion total {} ({:+.2}% vs 481150), totals by d {:?}, {} conv layers scale as 1/d",
                totals[3],
                100.0 * (octonion / 481_150.0 - 1.0),
                totals,
                real.len()
            ),
        )
    });
}

#[test]
fn learning_rate_schedule() {
    criterion("learning-rate schedule", || {
        let rows = [(0usize, 20usize, 0.01), (20, 60, 0.1), (60, 80, 0.01), (80, 110, 0.001), (110, 120, 0.0001)];
        let s = Schedule::convex();
        let mut probes = 0;
        let mut ok = s.epochs() == 120 && lr_at(&s, 120).is_err();
        for (start, end, rate) in rows {
            for e in [start, (start + end) / 2, end - 1] {
                ok &= lr_at(&s, e).unwrap() == rate;
                probes += 1;
            }
        }
        (ok, format!("{probes} boundary and interior epochs match"))
    });
}

#[test]
fn training_smoke() {
    criterion("training smoke", || {
        let start = Instant::now();
        let mut data = bundled::<f64>().unwrap();
        data.standardize().unwrap();
        let cfg = NetworkConfig::micro(8, 2);
        let run = || {
            let (mut net, rep) = harness::train(&cfg, &data, &mut |_| {}).unwrap();
            let acc = 1.0 - evaluate(&mut net, &data.train, 50).unwrap();
            (acc, rep.steps, rep.to_csv().unwrap())
        };
        let (acc, steps, csv) = run();
        let (acc2, _, csv2) = run();
        (
            acc >= 0.95 && steps <= 300 && acc == acc2 && csv == csv2 && start.elapsed() < Duration::from_secs(600),
            format!("train accuracy {:.1}% after {steps} steps, repeat identical: {}", 100.0 * acc, csv == csv2),
        )
    });
}

#[test]
fn deterministic_reports() {
    criterion("determinism", || {
        let cfg = NetworkConfig {
            epochs: 2,
            seed: 42,
            ..NetworkConfig::micro(4, 2)
        };
        let dir = tempfile::tempdir().unwrap();
        let mut files = Vec::new();
        for name in ["a", "b"] {
            let mut d = bundled::<f64>().unwrap();
            d.standardize().unwrap();
            let (_, rep) = harness::train(&cfg, &d, &mut |_| {}).unwrap();
            let out = dir.path().join(name);
            rep.write_dir(&out).unwrap();
            files.push((
                std::fs::read(out.join(harness::report::REPORT_CSV)).unwrap(),
                std::fs::read(out.join(harness::report::SUMMARY_JSON)).unwrap(),
            ));
            let back = RunReport::read_dir(&out).unwrap();
            assert_eq!(back.rows.len(), 2);
        }
        (files[0] == files[1], format!("report.csv and summary.json identical across two runs: {}", files[0] == files[1]))
    });
}
