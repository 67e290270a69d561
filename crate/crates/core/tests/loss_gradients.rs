use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttalab_core::losses::*;
use ttalab_core::netcore::{softmax_backward, Matrix};

const H: f64 = 1e-6;

fn grid() -> impl Iterator<Item = (f64, f64)> {
    (1..=19).flat_map(|i| (1..=19).map(move |j| (i as f64 * 0.05, j as f64 * 0.05)))
}

/// `|a − n| / max(|n|, 1)`: relative for large gradients, absolute near zero,
/// where the central difference cannot reproduce an exact 0.
fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / n.abs().max(1.0)
}

fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

fn rce_of_logits(z: &[f64], q: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().zip(q).map(|(ei, qi)| -(ei / s) * qi.max(PROB_FLOOR).ln()).sum()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn random_simplex(c: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..c).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

#[test]
fn binary_gradients_match_central_differences() {
    let mut worst: f64 = 0.0;
    for (p, q) in grid() {
        let ce = central(|p| -q * p.ln() - (1.0 - q) * (1.0 - p).ln(), p);
        let sce = central(|p| -q * p.ln() - (1.0 - q) * (1.0 - p).ln() - p * q.ln() - (1.0 - p) * (1.0 - q).ln(), p);
        worst = worst.max(rel(binary_ce_grad(p, q).unwrap(), ce));
        worst = worst.max(rel(binary_sce_grad(p, q).unwrap(), sce));
        let v = binary_sce_value(p, q).unwrap();
        assert!((v - binary_sce_value(q, p).unwrap()).abs() < 1e-12);
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn rce_logit_gradient_matches_softmax_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let c = rng.random_range(2..=10);
        let z: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q = random_simplex(c, &mut rng);
        let g = rce_logit_grad(&softmax(&z), &q).unwrap();
        for j in 0..c {
            let n = central(
                |v| {
                    let mut zz = z.clone();
                    zz[j] = v;
                    rce_of_logits(&zz, &q)
                },
                z[j],
            );
            worst = worst.max(rel(g[j], n));
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn binary_gradient_properties() {
    for (p, q) in grid() {
        if (p - q).abs() < 1e-12 {
            assert_eq!(binary_ce_grad(p, q).unwrap(), 0.0);
            if p > 0.5 + 1e-12 {
                assert!(binary_sce_grad(p, q).unwrap() < 0.0);
            }
        }
    }
    for i in 1..=19 {
        let p = i as f64 * 0.05;
        assert!((binary_sce_grad(p, 0.5).unwrap() - binary_ce_grad(p, 0.5).unwrap()).abs() < 1e-12);
    }
    assert!(binary_ce_grad(0.0, 0.5).is_err());
    assert!(binary_sce_grad(0.5, 1.0).is_err());
}

#[test]
fn rce_gradient_extremes_over_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let c = rng.random_range(2..=10);
        let p = random_simplex(c, &mut rng);
        let inf = |q: &[f64]| rce_logit_grad(&p, q).unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let one_hot_max = (0..c)
            .map(|k| inf(&(0..c).map(|j| if j == k { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        let uniform = inf(&vec![1.0 / c as f64; c]);
        assert!(uniform < 1e-15);
        for _ in 0..1000 {
            let q = random_simplex(c, &mut rng);
            let v = inf(&q);
            assert!(v <= one_hot_max + 1e-12 && v >= uniform);
        }
    }
}

#[test]
fn batch_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let q = Matrix::from_vec(3, 4, (0..3).flat_map(|_| random_simplex(4, &mut rng)).collect()).unwrap();
    let p = Matrix::from_vec(3, 4, (0..3).flat_map(|_| random_simplex(4, &mut rng)).collect()).unwrap();
    type LossFn = fn(&Matrix, &Matrix) -> ttalab_core::Result<LossValue>;
    let fns: [LossFn; 3] = [cross_entropy, reverse_cross_entropy, symmetric_cross_entropy];
    for f in fns {
        let g = f(&q, &p).unwrap().grad.unwrap();
        for i in 0..12 {
            let mut pp = p.clone();
            pp.as_mut_slice()[i] += H;
            let up = f(&q, &pp).unwrap().value;
            pp.as_mut_slice()[i] -= 2.0 * H;
            let down = f(&q, &pp).unwrap().value;
            assert!(rel(g.as_slice()[i], (up - down) / (2.0 * H)) < 1e-6);
        }
    }
    let e = entropy(&p).unwrap();
    let ge = e.grad.unwrap();
    for i in 0..12 {
        let mut pp = p.clone();
        pp.as_mut_slice()[i] += H;
        let up = entropy(&pp).unwrap().value;
        pp.as_mut_slice()[i] -= 2.0 * H;
        let down = entropy(&pp).unwrap().value;
        assert!(rel(ge.as_slice()[i], (up - down) / (2.0 * H)) < 1e-6);
    }
}

#[test]
fn contrastive_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z = Matrix::from_vec(9, 3, (0..27).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let l = contrastive_loss(&z, 0.2).unwrap();
    let g = l.grad.unwrap();
    for i in 0..27 {
        let mut zz = z.clone();
        zz.as_mut_slice()[i] += H;
        let up = contrastive_loss(&zz, 0.2).unwrap().value;
        zz.as_mut_slice()[i] -= 2.0 * H;
        let down = contrastive_loss(&zz, 0.2).unwrap().value;
        assert!(rel(g.as_slice()[i], (up - down) / (2.0 * H)) < 1e-6);
    }
}

fn simplex_rows(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, cols), rows).prop_map(move |rs| {
        let data: Vec<f64> = rs
            .into_iter()
            .flat_map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(move |v| v / s)
            })
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    })
}

proptest! {
    #[test]
    fn sce_is_symmetric_and_nonnegative((q, p) in (1usize..4, 2usize..6).prop_flat_map(|(r, c)| (simplex_rows(r, c), simplex_rows(r, c)))) {
        let a = symmetric_cross_entropy(&q, &p).unwrap().value;
        let b = symmetric_cross_entropy(&p, &q).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= 0.0);
        prop_assert!(cross_entropy(&q, &p).unwrap().value >= 0.0);
        prop_assert!(entropy(&p).unwrap().value >= 0.0);
    }

    #[test]
    fn logit_gradients_sum_to_zero((q, p) in (1usize..4, 2usize..6).prop_flat_map(|(r, c)| (simplex_rows(r, c), simplex_rows(r, c)))) {
        let g = symmetric_cross_entropy(&q, &p).unwrap().grad.unwrap();
        let dz = softmax_backward(&p, &g).unwrap();
        for row in dz.iter_rows() {
            prop_assert!(row.iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn ce_is_minimized_at_the_target(q in simplex_rows(1, 4), p in simplex_rows(1, 4)) {
        prop_assert!(cross_entropy(&q, &q).unwrap().value <= cross_entropy(&q, &p).unwrap().value + 1e-12);
    }

    #[test]
    fn binary_sce_gradient_decomposes(p in 0.01f64..0.99, q in 0.01f64..0.99) {
        let d = binary_sce_grad(p, q).unwrap() - binary_ce_grad(p, q).unwrap();
        prop_assert!((d - (1.0 / q - 1.0).ln()).abs() < 1e-12);
    }
}
