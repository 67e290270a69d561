use super::layers::{Param, ParamKind};
use super::network::Network;
use crate::error::{config_err, Result};

/// Heavy-ball SGD: `v ← μ·v + g`, `θ ← θ − lr·v`, then gradients are zeroed.
pub fn sgd_step(net: &mut Network, lr: f64, momentum: f64) -> Result<()> {
    sgd_step_filtered(net, lr, momentum, |_| true)
}

/// Like [`sgd_step`] but only parameters whose kind passes `filter` move.
/// Gradients of every parameter are zeroed afterwards.
pub fn sgd_step_filtered(
    net: &mut Network,
    lr: f64,
    momentum: f64,
    filter: impl Fn(ParamKind) -> bool,
) -> Result<()> {
    if lr < 0.0 || !lr.is_finite() {
        return Err(config_err!("learning rate must be finite and non-negative, got {lr}"));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(config_err!("momentum must lie in [0, 1), got {momentum}"));
    }
    for p in net.params_mut() {
        if filter(p.kind) {
            step_param(p, lr, momentum);
        }
        p.zero_grad();
    }
    Ok(())
}

fn step_param(p: &mut Param, lr: f64, momentum: f64) {
    for ((v, g), w) in p.velocity.iter_mut().zip(&p.grad).zip(p.value.iter_mut()) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{AffineLayer, Layer, ProjectionHead};
    use crate::netcore::layers::Activation;
    use rand::SeedableRng;

    fn tiny() -> Network {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cls = Layer::Affine(AffineLayer::from_parts(1, 2, alloc::vec![0.5, -0.5], Some(alloc::vec![0.0, 0.0])));
        Network::from_parts(1, alloc::vec![], alloc::vec![cls], ProjectionHead::new(1, 1, Activation::Relu, &mut rng)).unwrap()
    }

    fn set_grads(net: &mut Network, g: f64) {
        for p in net.params_mut() {
            p.grad.iter_mut().for_each(|x| *x = g);
        }
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let mut net = tiny();
        let before = net.clone();
        set_grads(&mut net, 3.0);
        sgd_step(&mut net, 0.0, 0.9).unwrap();
        for (a, b) in net.params().iter().zip(before.params()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn plain_descent_and_momentum_unrolling() {
        let mut net = tiny();
        let before: alloc::vec::Vec<f64> = net.params().iter().flat_map(|p| p.value.clone()).collect();
        set_grads(&mut net, 0.25);
        sgd_step(&mut net, 1.0, 0.0).unwrap();
        let after: alloc::vec::Vec<f64> = net.params().iter().flat_map(|p| p.value.clone()).collect();
        for (a, b) in after.iter().zip(&before) {
            assert!((b - a - 0.25).abs() < 1e-15);
        }
        assert!(net.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));

        let mut net = tiny();
        for _ in 0..2 {
            set_grads(&mut net, 1.0);
            sgd_step(&mut net, 1.0, 0.9).unwrap();
        }
        for (a, b) in net.params().iter().zip(tiny().params()) {
            for (x, y) in a.value.iter().zip(&b.value) {
                assert!((y - x - 2.9).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negative_lr_is_rejected() {
        let mut net = tiny();
        assert!(matches!(sgd_step(&mut net, -1e-3, 0.0), Err(crate::Error::Config(_))));
    }

    #[test]
    fn filter_freezes_other_kinds() {
        let mut net = tiny();
        let before = net.clone();
        set_grads(&mut net, 1.0);
        sgd_step_filtered(&mut net, 0.1, 0.0, |k| k == ParamKind::Bias).unwrap();
        for (a, b) in net.params().iter().zip(before.params()) {
            if a.kind == ParamKind::Bias {
                assert_ne!(a.value, b.value);
            } else {
                assert_eq!(a.value, b.value);
            }
        }
    }
}
