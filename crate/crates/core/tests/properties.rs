use octonet::algebra::{AlgebraDim, Octonion};
use octonet::batchnorm::{Mode, WhiteningBatchNorm};
use octonet::conv::{hconv2d, hconv2d_by_components, BlockWeight};
use octonet::harness::cifar::{encode_records, parse_records, CifarRecord, Variant};
use octonet::init::{init_weight, Criterion, InitSpec, PhaseLaw};
use octonet::network::schedule::{lr_at, Schedule, Segment};
use octonet::tensor::{HypercomplexTensor, Padding, RealTensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oct() -> impl Strategy<Value = Octonion<f64>> {
    prop::array::uniform8(-10.0f64..10.0).prop_map(Octonion::new)
}

fn close(a: &Octonion<f64>, b: &Octonion<f64>, tol: f64) -> bool {
    a.c.iter().zip(&b.c).all(|(x, y)| (x - y).abs() <= tol)
}

fn dims() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 2, 4, 8])
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> RealTensor<f64> {
    RealTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn random_weight(d: usize, c_out: usize, c_in: usize, k: usize, rng: &mut ChaCha8Rng) -> BlockWeight<f64> {
    let comps = (0..d).map(|_| random_tensor(&[c_out, c_in, k, k], rng)).collect();
    BlockWeight::new(comps, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn norm_composes(x in oct(), y in oct()) {
        let want = x.norm() * y.norm();
        prop_assert!(((x * y).norm() - want).abs() <= 1e-12 * want.max(1e-300));
    }

    #[test]
    fn conjugation_is_anti_homomorphic(x in oct(), y in oct()) {
        prop_assert!(close(&(x * y).conjugate(), &(y.conjugate() * x.conjugate()), 1e-9));
    }

    #[test]
    fn alternative_laws(x in oct(), y in oct()) {
        prop_assert!(close(&((x * x) * y), &(x * (x * y)), 1e-8));
        prop_assert!(close(&((y * x) * x), &(y * (x * x)), 1e-8));
    }

    #[test]
    fn subalgebras_closed(d in dims(), a in oct(), b in oct()) {
        let trunc = |o: Octonion<f64>| {
            let mut c = o.c;
            c[d..].iter_mut().for_each(|v| *v = 0.0);
            Octonion::new(c)
        };
        prop_assert!((trunc(a) * trunc(b)).lies_in(d));
    }

    #[test]
    fn inverse_is_two_sided(x in oct()) {
        prop_assume!(x.norm() > 1e-3);
        let inv = x.inverse().unwrap();
        prop_assert!(close(&(x * inv), &Octonion::one(), 1e-10));
        prop_assert!(close(&(inv * x), &Octonion::one(), 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_paths_agree(
        d in dims(),
        c_in in 1usize..3,
        c_out in 1usize..3,
        k in prop::sample::select(vec![1usize, 3]),
        hw in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = AlgebraDim::new(d).unwrap();
        let x = HypercomplexTensor::new(random_tensor(&[2, d * c_in, hw, hw], &mut rng), dim).unwrap();
        let w = random_weight(d, c_out, c_in, k, &mut rng);
        let a = hconv2d(&x, &w, 1, Padding::Same).unwrap();
        let b = hconv2d_by_components(&x, &w, 1, Padding::Same).unwrap();
        prop_assert!(a.inner().max_abs_diff(b.inner()).unwrap() <= 1e-12);
    }

    #[test]
    fn conv_is_linear(d in dims(), alpha in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = AlgebraDim::new(d).unwrap();
        let shape = [1, 2 * d, 4, 4];
        let x1 = random_tensor(&shape, &mut rng);
        let x2 = random_tensor(&shape, &mut rng);
        let w1 = random_weight(d, 2, 2, 3, &mut rng);
        let w2 = random_weight(d, 2, 2, 3, &mut rng);
        let conv = |x: &RealTensor<f64>, w: &BlockWeight<f64>| {
            hconv2d(&HypercomplexTensor::new(x.clone(), dim).unwrap(), w, 1, Padding::Same)
                .unwrap()
                .into_inner()
        };
        let mixed = x1.add(&x2.scale(alpha)).unwrap();
        let want = conv(&x1, &w1).add(&conv(&x2, &w1).scale(alpha)).unwrap();
        prop_assert!(conv(&mixed, &w1).max_abs_diff(&want).unwrap() <= 1e-10);

        let comps = w1.components().iter().zip(w2.components())
            .map(|(a, b)| a.add(&b.scale(alpha)).unwrap())
            .collect();
        let w_mix = BlockWeight::new(comps, None).unwrap();
        let want = conv(&x1, &w1).add(&conv(&x1, &w2).scale(alpha)).unwrap();
        prop_assert!(conv(&x1, &w_mix).max_abs_diff(&want).unwrap() <= 1e-10);
    }

    #[test]
    fn octonion_kernels_use_an_eighth_of_the_parameters(c in 1usize..6, k in prop::sample::select(vec![1usize, 3, 5])) {
        let real = BlockWeight::<f64>::zeros(AlgebraDim::new(1).unwrap(), 8 * c, 8 * c, k).unwrap();
        let oct = BlockWeight::<f64>::zeros(AlgebraDim::new(8).unwrap(), 8 * c, 8 * c, k).unwrap();
        prop_assert_eq!(real.param_count(), 8 * oct.param_count());
    }

    #[test]
    fn init_is_seed_deterministic(d in dims(), seed in any::<u64>()) {
        let dim = AlgebraDim::new(d).unwrap();
        let c = 2 * d;
        let spec = InitSpec::for_conv(Criterion::He, dim, c, c, 3).unwrap();
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            init_weight::<f64, _>(&spec, c, c, 3, PhaseLaw::default(), &mut rng).unwrap()
        };
        let (a, b) = (draw(), draw());
        for (x, y) in a.components().iter().zip(b.components()) {
            prop_assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn schedule_is_total(rates in prop::collection::vec((1usize..20, 1e-5f64..1.0), 1..6)) {
        let mut start = 0;
        let segments: Vec<Segment> = rates.iter().map(|&(len, rate)| {
            let s = Segment { start, end: start + len, rate };
            start += len;
            s
        }).collect();
        let schedule = Schedule::new(segments.clone()).unwrap();
        for e in 0..schedule.epochs() {
            let seg = segments.iter().find(|s| s.start <= e && e < s.end).unwrap();
            prop_assert_eq!(lr_at(&schedule, e).unwrap(), seg.rate);
        }
        prop_assert!(lr_at(&schedule, schedule.epochs()).is_err());
    }

    #[test]
    fn cifar_records_round_trip(fine in prop::bool::ANY, labels in prop::collection::vec(0u8..10, 1..4), seed in any::<u64>()) {
        let variant = if fine { Variant::C100 } else { Variant::C10 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<CifarRecord> = labels.iter().map(|&label| CifarRecord {
            label,
            coarse: fine.then_some(label / 5),
            pixels: (0..3072).map(|_| rng.random()).collect(),
        }).collect();
        let bytes = encode_records(&records, variant).unwrap();
        prop_assert_eq!(bytes.len(), records.len() * variant.record_len());
        prop_assert_eq!(parse_records(&bytes, variant).unwrap(), records);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bn_preserves_shape_and_keeps_gamma_symmetric(
        d in dims(),
        features in 1usize..3,
        n in 2usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = AlgebraDim::new(d).unwrap();
        let shape = [n, d * features, 3, 3];
        let mut bn = WhiteningBatchNorm::<f64>::new(dim, d * features).unwrap();
        for p in bn.affine.gamma_params_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        let x = random_tensor(&shape, &mut rng);
        let y = bn.forward(&x, Mode::Train).unwrap();
        prop_assert_eq!(y.shape(), &shape[..]);
        let g = bn.backward(&random_tensor(&shape, &mut rng)).unwrap();
        prop_assert_eq!(g.shape(), &shape[..]);
        for f in 0..features {
            prop_assert!(bn.affine.gamma_matrix(f).is_symmetric());
        }
        let inferred = bn.forward(&x, Mode::Infer).unwrap();
        prop_assert_eq!(inferred.shape(), &shape[..]);
    }

    #[test]
    fn bn_whitens_large_batches(d in prop::sample::select(vec![2usize, 4, 8]), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = AlgebraDim::new(d).unwrap();
        // scale each axis into [0.5, 2] and reflect: correlated but well conditioned
        let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vv = v.iter().map(|x| x * x).sum::<f64>().max(1e-12);
        let n = 1024;
        let mut x = RealTensor::<f64>::zeros(&[n, d, 1, 1]);
        for s in 0..n {
            let z: Vec<f64> = (0..d).map(|a| scales[a] * rng.random_range(-1.7..1.7)).collect();
            let vz = v.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            for a in 0..d {
                x.data_mut()[s * d + a] = 3.0 + z[a] - 2.0 * v[a] * vz / vv;
            }
        }
        let mut bn = WhiteningBatchNorm::<f64>::new(dim, d).unwrap();
        // identity γ exposes the whitened signal itself
        for a in 0..d {
            bn.affine.set_gamma(0, a, a, 1.0);
        }
        let y = bn.forward(&x, Mode::Train).unwrap();
        let eps = bn.state.eps;
        let yd = y.data();
        for a in 0..d {
            let mean = (0..n).map(|s| yd[s * d + a]).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() <= 1e-10, "mean {mean}");
            for b in 0..d {
                let cov = (0..n).map(|s| yd[s * d + a] * yd[s * d + b]).sum::<f64>() / n as f64;
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((cov - want).abs() <= f64::max(1e-3, 8.0 * eps), "cov[{a},{b}] = {cov}");
            }
        }
    }
}
