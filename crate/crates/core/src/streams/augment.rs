use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::netcore::Matrix;

/// Light input augmentation: per-sample scaling drawn from
/// `U[1 − strength, 1 + strength]` followed by Gaussian jitter with std `strength`.
pub fn augment<R: Rng + ?Sized>(batch: &Matrix, strength: f64, rng: &mut R) -> Matrix {
    let mut out = batch.clone();
    if strength == 0.0 {
        return out;
    }
    for i in 0..out.rows() {
        let scale = 1.0 + strength * (2.0 * rng.random::<f64>() - 1.0);
        for v in out.row_mut(i) {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * *v + strength * z;
        }
    }
    out
}
