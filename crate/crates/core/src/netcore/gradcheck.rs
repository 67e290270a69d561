use alloc::vec::Vec;

use super::network::Network;
use crate::error::{config_err, Result};

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn` must evaluate the scalar loss for the current parameters and
/// accumulate its gradient into the network (forward + backward). The return
/// value is `max |analytic − numeric| / (|numeric| + 1e-8)` over all parameters.
/// Parameters are restored and gradients zeroed on return.
pub fn finite_diff_check<F>(net: &mut Network, mut loss_fn: F, epsilon: f64) -> Result<f64>
where
    F: FnMut(&mut Network) -> Result<f64>,
{
    if !(epsilon > 1e-8 && epsilon < 1e-3) {
        return Err(config_err!("finite-difference epsilon must lie in (1e-8, 1e-3), got {epsilon}"));
    }
    net.zero_grad();
    loss_fn(net)?;
    let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();

    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let original = net.params()[pi].value[j];
            net.params_mut()[pi].value[j] = original + epsilon;
            let plus = loss_fn(net)?;
            net.params_mut()[pi].value[j] = original - epsilon;
            let minus = loss_fn(net)?;
            net.params_mut()[pi].value[j] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max((a - numeric).abs() / (numeric.abs() + 1e-8));
        }
    }
    net.zero_grad();
    Ok(worst)
}
