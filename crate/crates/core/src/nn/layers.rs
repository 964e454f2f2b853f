//! Parameterized layers: thin wrappers that pair tensors from a
//! [`ParamStore`](super::ParamStore) with the underlying tensor ops.
//!
//! Each layer has a `register` function that creates and names its
//! parameters and a `bind` function that picks them back out of a store
//! (cheap: tensors are shared handles). Models call `register` once at
//! construction and `bind` on every forward pass so parameters can be
//! traced per training step.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Elem, Tensor};

use super::init::kaiming_uniform;
use super::params::ParamStore;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone)]
pub struct Conv2d<T: Elem> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Elem> Conv2d<T> {
    pub fn register(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let weight = kaiming_uniform(&[cout, cin, k, k], cin * k * k, rng)?;
        store.insert(format!("{name}.weight"), weight)?;
        store.insert(format!("{name}.bias"), Tensor::zeros(&[cout]))?;
        Ok(())
    }

    pub fn bind(store: &ParamStore<T>, name: &str, stride: usize, pad: usize) -> Result<Conv2d<T>> {
        Ok(Conv2d {
            weight: store.get(&format!("{name}.weight"))?.clone(),
            bias: store.get(&format!("{name}.bias"))?.clone(),
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv2d(&self.weight, Some(&self.bias), self.stride, self.pad)
    }
}

#[derive(Clone)]
pub struct Linear<T: Elem> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Elem> Linear<T> {
    pub fn register(
        store: &mut ParamStore<T>,
        name: &str,
        din: usize,
        dout: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let weight = kaiming_uniform(&[din, dout], din, rng)?;
        store.insert(format!("{name}.weight"), weight)?;
        store.insert(format!("{name}.bias"), Tensor::zeros(&[dout]))?;
        Ok(())
    }

    pub fn bind(store: &ParamStore<T>, name: &str) -> Result<Linear<T>> {
        Ok(Linear {
            weight: store.get(&format!("{name}.weight"))?.clone(),
            bias: store.get(&format!("{name}.bias"))?.clone(),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.linear(&self.weight, Some(&self.bias))
    }
}

#[derive(Clone)]
pub struct LayerNorm<T: Elem> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: T,
}

impl<T: Elem> LayerNorm<T> {
    pub fn register(store: &mut ParamStore<T>, name: &str, d: usize) -> Result<()> {
        store.insert(format!("{name}.gamma"), Tensor::ones(&[d]))?;
        store.insert(format!("{name}.beta"), Tensor::zeros(&[d]))?;
        Ok(())
    }

    pub fn bind(store: &ParamStore<T>, name: &str) -> Result<LayerNorm<T>> {
        Ok(LayerNorm {
            gamma: store.get(&format!("{name}.gamma"))?.clone(),
            beta: store.get(&format!("{name}.beta"))?.clone(),
            eps: T::from_f64(LAYER_NORM_EPS),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.layer_norm(&self.gamma, &self.beta, self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn conv_identity_kernel_is_identity() {
        // 3×3 kernel with centre 1, pad 1 → output equals input.
        let w = {
            let mut data = vec![0.0f64; 9];
            data[4] = 1.0;
            Tensor::from_vec(data, &[1, 1, 3, 3]).unwrap()
        };
        let x = Tensor::from_vec((0..12).map(|v| v as f64).collect(), &[1, 1, 3, 4]).unwrap();
        let y = x.conv2d(&w, None, 1, 1).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn conv_1x1_is_per_pixel_linear_map() {
        let w = Tensor::from_vec(vec![2.0f64], &[1, 1, 1, 1]).unwrap();
        let b = Tensor::from_vec(vec![0.5f64], &[1]).unwrap();
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let y = x.conv2d(&w, Some(&b), 1, 0).unwrap();
        assert_eq!(y.to_vec(), vec![2.5, 4.5, 6.5, 8.5]);
    }

    #[test]
    fn conv_hand_sum() {
        // 2×2 input [[1,2],[3,4]], 2×2 kernel of ones, no pad → [[10]].
        let x = Tensor::from_vec(vec![1.0f64, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let w = Tensor::ones(&[1, 1, 2, 2]);
        let y = x.conv2d(&w, None, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.to_vec(), vec![10.0]);
    }

    #[test]
    fn conv_channel_mismatch_errors() {
        let x = Tensor::<f64>::ones(&[1, 2, 4, 4]);
        let w = Tensor::<f64>::ones(&[1, 3, 3, 3]);
        assert!(x.conv2d(&w, None, 1, 1).is_err());
    }

    #[test]
    fn linear_hand_sum_and_batch_shape() {
        let w = Tensor::from_vec(vec![1.0f64, 1.0], &[2, 1]).unwrap();
        let b = Tensor::from_vec(vec![0.5f64], &[1]).unwrap();
        let x = Tensor::from_vec(vec![1.0, 2.0], &[1, 2]).unwrap();
        let y = x.linear(&w, Some(&b)).unwrap();
        assert_eq!(y.to_vec(), vec![3.5]);

        let xb = Tensor::<f64>::ones(&[3, 5, 2]);
        let yb = xb.linear(&w, Some(&b)).unwrap();
        assert_eq!(yb.shape(), &[3, 5, 1]);
    }

    #[test]
    fn linear_identity_weight() {
        let w = Tensor::from_vec(vec![1.0f64, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let x = Tensor::from_vec(vec![3.0, -4.0], &[1, 2]).unwrap();
        let y = x.linear(&w, None).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, -4.0]);
    }

    #[test]
    fn layer_norm_constant_token_and_closed_form() {
        let g = Tensor::<f64>::ones(&[3]);
        let b = Tensor::<f64>::zeros(&[3]);
        let x = Tensor::from_vec(vec![5.0, 5.0, 5.0], &[1, 3]).unwrap();
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-9));

        let g2 = Tensor::<f64>::ones(&[2]);
        let b2 = Tensor::<f64>::zeros(&[2]);
        let x2 = Tensor::from_vec(vec![-1.0, 1.0], &[1, 2]).unwrap();
        let y2 = x2.layer_norm(&g2, &b2, 1e-5).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y2.data()[0] + expect).abs() < 1e-12);
        assert!((y2.data()[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_shift_invariance() {
        let g = Tensor::<f64>::ones(&[4]);
        let b = Tensor::<f64>::zeros(&[4]);
        let x = Tensor::from_vec(vec![0.3, -1.2, 0.7, 2.0], &[1, 4]).unwrap();
        let shifted = x.affine(1.0, 10.0).unwrap();
        let y1 = x.layer_norm(&g, &b, 1e-5).unwrap();
        let y2 = shifted.layer_norm(&g, &b, 1e-5).unwrap();
        for (a, c) in y1.data().iter().zip(y2.data()) {
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_moments() {
        let d = 16;
        let g = Tensor::<f64>::ones(&[d]);
        let b = Tensor::<f64>::zeros(&[d]);
        let mut rng = rng_for(9, &["ln"]);
        let x: Tensor<f64> = kaiming_uniform(&[8, d], 4, &mut rng).unwrap();
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        for r in 0..8 {
            let row = &y.data()[r * d..(r + 1) * d];
            let mean: f64 = row.iter().sum::<f64>() / d as f64;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn gelu_values() {
        let x = Tensor::from_vec(vec![0.0f64, 10.0, 1.0], &[3]).unwrap();
        let y = x.gelu().unwrap();
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 10.0).abs() < 1e-6);
        assert!((y.data()[2] - 0.8413447460685429).abs() < 1e-12);
    }

    #[test]
    fn gelu_monotone_in_tested_range() {
        // x·Φ(x) is increasing right of its minimum near x ≈ −0.75.
        let xs: Vec<f64> = (-7..=40).map(|i| i as f64 * 0.1).collect();
        let n = xs.len();
        let y = Tensor::from_vec(xs, &[n]).unwrap().gelu().unwrap();
        for w in y.data().windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
}
