use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttalab_core::bench::{error_pct, prepare, ModelSpec, PretrainConfig};
use ttalab_core::netcore::{BnMode, Matrix};
use ttalab_core::streams::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn two_gaussians_are_separable_by_lda() {
    let spec = SourceSpec {
        classes: 2,
        dim: 2,
        per_class: 100,
        separation: 2.0,
        sigma: 0.5,
        intrinsic_dim: 2,
        warp: 0.0,
        means: Some(Matrix::from_rows(&[[2.0, 0.0], [-2.0, 0.0]]).unwrap()),
        ..SourceSpec::default()
    };
    let data = generate_source(&spec, 3).unwrap();
    assert_eq!(data.len(), 200);
    // closed-form LDA: pooled covariance, w = Σ⁻¹(μ0 − μ1), threshold at the midpoint
    let mut mu = [[0.0; 2]; 2];
    for i in 0..data.len() {
        for (d, m) in mu[data.y[i]].iter_mut().enumerate() {
            *m += data.x[(i, d)] / 100.0;
        }
    }
    let mut s = [[0.0; 2]; 2];
    for i in 0..data.len() {
        let m = mu[data.y[i]];
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] += (data.x[(i, a)] - m[a]) * (data.x[(i, b)] - m[b]) / 198.0;
            }
        }
    }
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
    let diff = [mu[0][0] - mu[1][0], mu[0][1] - mu[1][1]];
    let w = [inv[0][0] * diff[0] + inv[0][1] * diff[1], inv[1][0] * diff[0] + inv[1][1] * diff[1]];
    let mid = [(mu[0][0] + mu[1][0]) / 2.0, (mu[0][1] + mu[1][1]) / 2.0];
    let wrong = (0..data.len())
        .filter(|&i| {
            let score = w[0] * (data.x[(i, 0)] - mid[0]) + w[1] * (data.x[(i, 1)] - mid[1]);
            (score < 0.0) != (data.y[i] == 1)
        })
        .count();
    assert!((wrong as f64) < 0.01 * data.len() as f64, "{wrong} errors");
}

#[test]
fn source_generation_edge_cases() {
    let one = SourceSpec { per_class: 1, ..SourceSpec::default() };
    let d = generate_source(&one, 0).unwrap();
    assert_eq!(d.len(), 10);
    assert_eq!(d.class_counts(), vec![1; 10]);
    assert_eq!(generate_source(&SourceSpec::default(), 9).unwrap(), generate_source(&SourceSpec::default(), 9).unwrap());
    assert_ne!(generate_source(&one, 1).unwrap().x, d.x);
    for bad in [
        SourceSpec { classes: 1, ..SourceSpec::default() },
        SourceSpec { dim: 1, intrinsic_dim: 1, ..SourceSpec::default() },
        SourceSpec { per_class: 0, ..SourceSpec::default() },
        SourceSpec { intrinsic_dim: 40, ..SourceSpec::default() },
    ] {
        assert!(matches!(generate_source(&bad, 0), Err(ttalab_core::Error::Config(_))));
    }
    let skewed = SourceSpec { imbalance: 10.0, ..SourceSpec::default() };
    let counts = generate_source(&skewed, 0).unwrap().class_counts();
    assert!(counts[0] > 5 * counts[9]);
}

#[test]
fn gaussian_noise_energy_matches_severity() {
    let op = CorruptionOp::new(CorruptionKind::GaussianNoise, 1).unwrap();
    let d = 32;
    let mut r = rng(1);
    let draws = 20_000;
    let mut energy = 0.0;
    for _ in 0..draws {
        let mut x = vec![0.5; d];
        op.apply(&mut x, &mut r);
        energy += x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>();
    }
    let mean = energy / draws as f64;
    assert!((mean - d as f64 * 0.01).abs() < 0.01 * d as f64 * 0.05, "{mean}");
}

#[test]
fn contrast_shrinks_variance() {
    let op = CorruptionOp::new(CorruptionKind::Contrast, 5).unwrap();
    let mut r = rng(2);
    let domain = SourceDomain::new(&SourceSpec::default(), 2).unwrap();
    for _ in 0..100 {
        let x = domain.draw(3, &mut r);
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let mut y = x.clone();
        op.apply(&mut y, &mut r);
        assert!((var(&y) - 0.04 * var(&x)).abs() < 1e-9 * var(&x).max(1.0));
    }
}

#[test]
fn zero_magnitude_is_identity_for_every_kind() {
    let mut r = rng(3);
    let x: Vec<f64> = (0..8).map(|v| v as f64 - 3.5).collect();
    for k in CorruptionKind::ALL {
        let mut y = x.clone();
        k.apply(&mut y, 0.0, &mut r);
        assert_eq!(x, y, "{k}");
        let table = k.severity_table();
        assert!(table.windows(2).all(|w| w[0] < w[1]), "{k}");
        assert_eq!(k.name().parse::<CorruptionKind>().unwrap(), k);
    }
    assert!(CorruptionOp::new(CorruptionKind::Impulse, 0).is_err());
    assert!(CorruptionOp::new(CorruptionKind::Impulse, 6).is_err());
    assert!("fog".parse::<CorruptionKind>().is_err());
}

#[test]
fn augmentation_energy() {
    let mut r = rng(4);
    let x = Matrix::from_rows(&[[1.0, -2.0, 0.5, 3.0]]).unwrap();
    assert_eq!(augment(&x, 0.0, &mut r), x);
    let draws = 20_000;
    let mut energy = 0.0;
    for _ in 0..draws {
        let y = augment(&x, 0.1, &mut r);
        energy += y.sub(&x).unwrap().as_slice().iter().map(|v| v * v).sum::<f64>();
    }
    let norm2: f64 = x.as_slice().iter().map(|v| v * v).sum();
    let expected = 4.0 * 0.01 + 0.01 / 3.0 * norm2;
    let mean = energy / draws as f64;
    assert!((mean - expected).abs() < 0.03 * expected, "{mean} vs {expected}");
}

#[test]
fn gradual_and_continual_counts() {
    let g = build_gradual(&[CorruptionKind::Impulse], 2);
    assert_eq!(g.segments.len(), 9);
    assert_eq!(g.total_batches(), 18);
    let sev: Vec<u8> = g.manifest().iter().map(|r| r.severity).collect();
    assert_eq!(sev, GRADUAL_PATH.to_vec());
    let kinds: Vec<CorruptionKind> = (0..15).map(|i| CorruptionKind::ALL[i % 8]).collect();
    assert_eq!(build_gradual(&kinds, 1).segments.len(), 135);
    let empty = build_gradual(&[], 3);
    assert!(empty.segments.is_empty());
    let source = TestSource::Domain(SourceDomain::new(&SourceSpec::default(), 0).unwrap());
    assert_eq!(Stream::new(&empty, &source).unwrap().count(), 0);
    let c = build_continual(&CorruptionKind::ALL, 20);
    assert!(c.manifest().iter().all(|r| r.severity == 5 && r.batches == 20));
    assert_eq!(c.manifest()[3].kind, "contrast");
}

#[test]
fn difficulty_orders() {
    use CorruptionKind::*;
    let kinds = [GaussianNoise, Impulse, Smoothing];
    let e2h = order_by_errors(&kinds, &[0.05, 0.40, 0.20], Direction::EasyToHard).unwrap();
    assert_eq!(e2h, vec![GaussianNoise, Smoothing, Impulse]);
    let mut h2e = order_by_errors(&kinds, &[0.05, 0.40, 0.20], Direction::HardToEasy).unwrap();
    h2e.reverse();
    assert_eq!(h2e, e2h);
    for dir in [Direction::EasyToHard, Direction::HardToEasy] {
        assert_eq!(order_by_errors(&kinds, &[0.1; 3], dir).unwrap(), kinds.to_vec());
    }
    assert!(order_by_errors(&kinds, &[0.1], Direction::EasyToHard).is_err());
}

#[test]
fn stream_batches_are_deterministic_and_position_independent() {
    let domain = SourceDomain::new(&SourceSpec::default(), 5).unwrap();
    let source = TestSource::Domain(domain);
    let a = build_continual(&[CorruptionKind::Impulse, CorruptionKind::Contrast], 3).with_seed(7).with_batch_size(16);
    let b = build_continual(&[CorruptionKind::Contrast, CorruptionKind::Impulse], 3).with_seed(7).with_batch_size(16);
    let first: Vec<StreamBatch> = Stream::new(&a, &source).unwrap().collect();
    let again: Vec<StreamBatch> = Stream::new(&a, &source).unwrap().collect();
    assert_eq!(first, again);
    let swapped: Vec<StreamBatch> = Stream::new(&b, &source).unwrap().collect();
    assert_eq!(first.len(), 6);
    for i in 0..3 {
        assert_eq!(first[i].x, swapped[i + 3].x);
        assert_eq!(first[i].y, swapped[i + 3].y);
    }
    assert!(first.iter().all(|b| b.x.shape() == (16, 32) && b.y.len() == 16));
}

#[test]
fn source_error_grows_with_severity() {
    let spec = SourceSpec::default();
    for seed in 0..2 {
        let p = prepare(&spec, &ModelSpec::default(), &PretrainConfig::default(), 2000, seed).unwrap();
        let mut model = p.model.clone();
        for kind in CorruptionKind::ALL {
            let mut last = 0.0;
            for s in 1..=5 {
                let op = CorruptionOp::new(kind, s).unwrap();
                let x = op.apply_batch(&p.probe.x, &mut rng(s as u64));
                let err = error_pct(&model.infer(&x, BnMode::Eval).unwrap().logits.argmax_rows(), &p.probe.y);
                assert!(err + 1.0 >= last, "seed {seed} {kind}: severity {s} error {err} < {last}");
                last = last.max(err);
            }
        }
    }
}

proptest! {
    #[test]
    fn corruption_keeps_labels_and_shapes(kind in 0usize..8, severity in 1u8..=5, y in 0usize..10, seed in 0u64..1000) {
        let mut r = rng(seed);
        let domain = SourceDomain::new(&SourceSpec::default(), seed).unwrap();
        let sample = Sample { x: domain.draw(y, &mut r), y };
        let op = CorruptionOp::new(CorruptionKind::ALL[kind], severity).unwrap();
        let out = corrupt(&sample, &op, &mut r);
        prop_assert_eq!(out.y, y);
        prop_assert_eq!(out.x.len(), sample.x.len());
        prop_assert!(out.x.iter().all(|v| v.is_finite()));
        let batch = domain.draw_batch(&[y, y, y], &mut r);
        prop_assert_eq!(op.apply_batch(&batch, &mut r).shape(), batch.shape());
    }

    #[test]
    fn order_modes_are_reversals(errors in proptest::collection::hash_set(0u32..1000, 8)) {
        let errors: Vec<f64> = errors.into_iter().map(|e| e as f64).collect();
        let mut a = order_by_errors(&CorruptionKind::ALL, &errors, Direction::EasyToHard).unwrap();
        let b = order_by_errors(&CorruptionKind::ALL, &errors, Direction::HardToEasy).unwrap();
        a.reverse();
        prop_assert_eq!(a, b);
    }
}
