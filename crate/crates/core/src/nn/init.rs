//! Parameter initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Kaiming-uniform draw: values uniform in ±√(6/fan_in), deterministic for a
/// given generator state. Draw order is row-major over the shape.
pub fn kaiming_uniform<T: Elem>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::invalid("kaiming init", "fan_in must be positive"));
    }
    let bound = (6.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<T> = (0..numel)
        .map(|_| {
            let u: f64 = rng.gen::<f64>();
            T::from_f64(bound * (2.0 * u - 1.0))
        })
        .collect();
    Tensor::from_vec(data, shape)
}

pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn samples_within_bound() {
        let mut rng = rng_for(1, &["init"]);
        let t: Tensor<f64> = kaiming_uniform(&[100_000], 24, &mut rng).unwrap();
        let bound = kaiming_bound(24);
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn sample_mean_near_zero() {
        let n = 100_000usize;
        let mut rng = rng_for(2, &["init"]);
        let t: Tensor<f64> = kaiming_uniform(&[n], 9, &mut rng).unwrap();
        let mean: f64 = t.data().iter().sum::<f64>() / n as f64;
        // std of the mean estimator for U(−a,a) is a/√(3n); allow 3σ.
        let a = kaiming_bound(9);
        let sigma = a / (3.0 * n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} vs 3σ {}", 3.0 * sigma);
    }

    #[test]
    fn same_seed_same_tensor() {
        let mut r1 = rng_for(3, &["w"]);
        let mut r2 = rng_for(3, &["w"]);
        let a: Tensor<f32> = kaiming_uniform(&[4, 7], 7, &mut r1).unwrap();
        let b: Tensor<f32> = kaiming_uniform(&[4, 7], 7, &mut r2).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn zero_fan_in_errors() {
        let mut rng = rng_for(4, &[]);
        assert!(kaiming_uniform::<f32>(&[2], 0, &mut rng).is_err());
    }
}
