use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{Real, Tensor};

/// Standard deviation of the weight initializer.
pub const INIT_STDDEV: f64 = 0.1;

/// Normal(0, σ) sample, redrawn until it lies within ±2σ.
pub fn truncated_normal<R: Rng>(rng: &mut R, stddev: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * stddev;
        }
    }
}

pub fn truncated_normal_tensor<T: Real, R: Rng>(dims: &[usize], stddev: f64, rng: &mut R) -> Tensor<T> {
    let mut t = Tensor::zeros(dims);
    for v in t.data_mut() {
        *v = T::of(truncated_normal(rng, stddev));
    }
    t
}
