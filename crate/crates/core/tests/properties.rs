use dlu_core::shuffle::{shuffle_offsets, unshuffle_offsets};
use dlu_core::verify::{check_normalization_preservation, check_zero_offset_identity};
use dlu_core::Rng;
use dlu_core::*;
use proptest::prelude::*;

fn odd() -> impl Strategy<Value = usize> {
    prop_oneof![Just(1usize), Just(3), Just(5)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expanded_kernels_stay_normalised(seed in any::<u64>(), sigma in 1usize..5, k_up in odd(), spread in 0.0f64..20.0) {
        let cfg = UpsampleConfig { sigma, k_up, k_encoder: 1, c_mid: 1, c_in: 1 };
        let mut rng = Rng::new(seed);
        let logits: Tensor = random_gaussian(&mut rng, (1, cfg.taps(), 3, 4), 0.0, 3.0).unwrap();
        let source = KernelField::new(channel_softmax(&logits), true);
        let off: Tensor = random_uniform(&mut rng, (1, 2, 3 * sigma, 4 * sigma), -spread, spread);
        let out = expand_kernel_space(&source, &OffsetField::new(off).unwrap(), &cfg).unwrap();
        let (sum_err, min) = out.normalization_error();
        prop_assert!(sum_err <= 1e-12);
        prop_assert!(min >= 0.0);
    }

    #[test]
    fn pixel_shuffle_round_trips(seed in any::<u64>(), sigma in 1usize..4, g in 1usize..3, h in 1usize..5, w in 1usize..5) {
        let x: Tensor = random_uniform(&mut Rng::new(seed), (1, g * sigma * sigma, h, w), -1.0, 1.0);
        prop_assert_eq!(pixel_unshuffle(&pixel_shuffle(&x, sigma).unwrap(), sigma).unwrap(), x);
        let o: Tensor = random_uniform(&mut Rng::new(seed ^ 1), (2, 2 * sigma * sigma, h, w), -1.0, 1.0);
        prop_assert_eq!(unshuffle_offsets(&shuffle_offsets(&o, sigma).unwrap(), sigma).unwrap(), o);
    }

    #[test]
    fn reassembly_is_linear_in_input(seed in any::<u64>(), sigma in 1usize..4, k_up in odd(), a in -3.0f64..3.0) {
        let cfg = UpsampleConfig { sigma, k_up, k_encoder: 1, c_mid: 1, c_in: 2 };
        let mut rng = Rng::new(seed);
        let x: Tensor = random_uniform(&mut rng, (1, 2, 3, 3), -1.0, 1.0);
        let y: Tensor = random_uniform(&mut rng, (1, 2, 3, 3), -1.0, 1.0);
        let logits: Tensor = random_gaussian(&mut rng, (1, cfg.taps(), 3 * sigma, 3 * sigma), 0.0, 1.0).unwrap();
        let k = KernelField::new(channel_softmax(&logits), true);
        let lhs = reassemble(&x.scale(a).add(&y).unwrap(), &k, &cfg).unwrap();
        let rhs = reassemble(&x, &k, &cfg).unwrap().scale(a).add(&reassemble(&y, &k, &cfg).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn bilinear_sample_is_convex(seed in any::<u64>(), x in -2.0f64..6.0, y in -2.0f64..5.0) {
        let f: Tensor = random_uniform(&mut Rng::new(seed), (1, 2, 3, 4), -1.0, 1.0);
        for (c, v) in bilinear_sample(&f, 0, x, y).into_iter().enumerate() {
            let plane = f.plane(0, c);
            let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
        }
    }
}

#[test]
fn normalisation_suite_over_configs() {
    for sigma in [1, 2, 4] {
        for k_up in [1, 3, 5] {
            let cfg = UpsampleConfig {
                sigma,
                k_up,
                k_encoder: 1,
                c_mid: 1,
                c_in: 1,
            };
            let r = check_normalization_preservation(&cfg, 1000, 7).unwrap();
            assert!(r.passed && r.samples >= 1000, "{r:?}");
            assert!(check_zero_offset_identity(&cfg, 7).unwrap().passed);
        }
    }
}

#[test]
fn init_yields_zero_offsets_and_replicated_kernels() {
    let cfg = UpsampleConfig {
        c_in: 4,
        c_mid: 8,
        ..UpsampleConfig::default()
    };
    let p = DluParams::init(&cfg, &mut Rng::new(3)).unwrap();
    assert!(p.offset_predictor.weights.data().iter().all(|&v| v == 0.0));
    assert!(p.offset_predictor.bias.iter().all(|&v| v == 0.0));
    let x: Tensor = random_uniform(&mut Rng::new(4), (1, 4, 6, 5), 0.0, 1.0);
    let k = dlu_generate_kernels(&x, &p, &cfg).unwrap();
    assert!(k.offsets.offsets.data().iter().all(|&v| v == 0.0));
    assert_eq!(
        k.expanded.kernels,
        nearest_upsample(&k.source.kernels, 2).unwrap()
    );
}

#[test]
fn constant_input_gives_constant_interior_at_init() {
    let cfg = UpsampleConfig {
        c_in: 3,
        c_mid: 4,
        k_up: 3,
        ..UpsampleConfig::default()
    };
    let p = DluParams::init(&cfg, &mut Rng::new(8)).unwrap();
    let out = dlu_forward(&Tensor::<f64>::full((1, 3, 5, 5), 0.7), &p, &cfg).unwrap();
    for c in 0..3 {
        for i in 2..8 {
            for j in 2..8 {
                assert!((out.at(0, c, i, j) - 0.7).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gaussian_and_uniform_statistics() {
    let mut rng = Rng::new(21);
    let g: Tensor = random_gaussian(&mut rng, (1, 1, 200, 200), 0.0, 0.001).unwrap();
    let n = g.len() as f64;
    let mean = g.sum() / n;
    let std = (g.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((std - 0.001).abs() < 0.05 * 0.001, "std {std}");
    assert!(mean.abs() < 1e-4);
    assert!(random_gaussian::<f64>(&mut rng, (1, 1, 1, 1), 0.0, 0.0).is_err());
    let a: Tensor = random_gaussian(&mut Rng::new(5), (2, 3, 4, 5), 0.0, 1.0).unwrap();
    let b: Tensor = random_gaussian(&mut Rng::new(5), (2, 3, 4, 5), 0.0, 1.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn f32_container_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.dlut");
    let t: Tensor<f32> = random_uniform(&mut Rng::new(2), (1, 2, 3, 4), -1.0, 1.0);
    io::write_tensor(&path, &t, serde_json::Value::Null).unwrap();
    assert_eq!(io::read_tensor::<f32>(&path).unwrap(), t);
    assert_eq!(
        io::peek_dtype(&std::fs::read(&path).unwrap()).unwrap(),
        DType::F32
    );
    assert!(io::read_tensor::<f64>(&path).is_err());
}
