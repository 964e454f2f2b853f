//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Gradients, Tensor};

use super::params::ParamStore;

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            ..Default::default()
        }
    }
}

/// First/second moment buffers, one pair per parameter, plus the step count.
#[derive(Clone)]
pub struct AdamState<T: Elem> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Elem> AdamState<T> {
    pub fn for_store(store: &ParamStore<T>) -> Self {
        let m = store.iter().map(|(_, t)| vec![T::ZERO; t.numel()]).collect();
        let v = store.iter().map(|(_, t)| vec![T::ZERO; t.numel()]).collect();
        AdamState { m, v, t: 0 }
    }
}

/// One Adam update over every parameter in `store`.
///
/// `traced` must be the tape view the gradients were computed through
/// (the store returned by `ParamStore::traced` for this step).
pub fn adam_step<T: Elem>(
    store: &mut ParamStore<T>,
    traced: &ParamStore<T>,
    grads: &Gradients<T>,
    hp: &AdamParams,
    state: &mut AdamState<T>,
) -> Result<()> {
    if traced.len() != store.len() {
        return Err(Error::invalid("adam", "traced store does not match parameter store"));
    }
    state.t += 1;
    let t = state.t;
    let beta1 = T::from_f64(hp.beta1);
    let beta2 = T::from_f64(hp.beta2);
    let one_m_b1 = T::from_f64(1.0 - hp.beta1);
    let one_m_b2 = T::from_f64(1.0 - hp.beta2);
    let eps = T::from_f64(hp.eps);
    // Bias correction folded into the step size for m, applied per-element for v.
    let corr1 = 1.0 - hp.beta1.powi(t as i32);
    let corr2 = 1.0 - hp.beta2.powi(t as i32);
    let inv_corr2_sqrt = T::from_f64(1.0 / corr2.sqrt());
    let step = T::from_f64(hp.lr / corr1);

    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    for (i, name) in names.iter().enumerate() {
        let traced_t = traced.get(name)?;
        let grad = grads
            .get(traced_t)
            .ok_or_else(|| Error::MissingGradient(name.clone()))?;
        let value = store.get(name)?;
        if grad.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam",
                lhs: value.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        let g = grad.data();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let mut new_value = value.to_vec();
        for j in 0..g.len() {
            m[j] = beta1 * m[j] + one_m_b1 * g[j];
            v[j] = beta2 * v[j] + one_m_b2 * g[j] * g[j];
            let denom = (v[j]).sqrt() * inv_corr2_sqrt + eps;
            new_value[j] -= step * m[j] / denom;
        }
        let shape = value.shape().to_vec();
        store.set(name, Tensor::from_vec(new_value, &shape)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn run_step(value: f32, grad_factor: f32, hp: &AdamParams, state: &mut AdamState<f32>) -> f32 {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(value)).unwrap();
        let tape = Tape::new();
        let traced = store.traced(&tape);
        // loss = grad_factor * w  →  dw = grad_factor
        let loss = traced.get("w").unwrap().affine(grad_factor, 0.0).unwrap();
        let grads = tape.backward(&loss).unwrap();
        adam_step(&mut store, &traced, &grads, hp, state).unwrap();
        store.get("w").unwrap().item().unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let hp = AdamParams::with_lr(0.001);
        let mut state = AdamState {
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
            t: 0,
        };
        let w = run_step(0.7, 0.0, &hp, &mut state);
        assert_eq!(w, 0.7);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn unit_gradient_first_step_magnitude() {
        // Bias-corrected update with g=1 at t=1 is lr·(1−tiny) ≈ lr.
        let hp = AdamParams::with_lr(0.001);
        let mut state = AdamState {
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
            t: 0,
        };
        let w = run_step(0.0, 1.0, &hp, &mut state);
        let delta = (0.0 - w) as f64;
        assert!((delta - 0.001).abs() < 1e-8, "delta {delta}");
    }

    #[test]
    fn constant_gradient_keeps_descending() {
        let hp = AdamParams::with_lr(0.001);
        let mut state = AdamState {
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
            t: 0,
        };
        let w1 = run_step(0.0, 1.0, &hp, &mut state);
        let w2 = run_step(w1, 1.0, &hp, &mut state);
        assert!(w1 < 0.0);
        assert!(w2 < w1);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(1.0f32)).unwrap();
        store.insert("unused", Tensor::scalar(1.0f32)).unwrap();
        let tape = Tape::new();
        let traced = store.traced(&tape);
        let loss = traced.get("w").unwrap().affine(1.0, 0.0).unwrap();
        let grads = tape.backward(&loss).unwrap();
        let mut state = AdamState::for_store(&store);
        let hp = AdamParams::default();
        let err = adam_step(&mut store, &traced, &grads, &hp, &mut state).unwrap_err();
        assert!(matches!(err, Error::MissingGradient(name) if name == "unused"));
    }
}
