//! Central finite-difference gradient verification.
//!
//! This is the independent oracle for every backward rule in the crate: it
//! re-evaluates the *forward* computation at perturbed inputs and never
//! touches the tape internals, so it cannot share a bug with the autodiff
//! path it checks.

use crate::error::Result;
use crate::rng::rng_for;
use crate::tensor::{Tape, Tensor};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

/// Worst observed relative error and how many coordinates were compared.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-7 {
        // Both effectively zero; treat the residual as absolute.
        (a - b).abs()
    } else {
        (a - b).abs() / denom
    }
}

/// Compare analytic gradients of `f` against central finite differences.
///
/// `f` maps the input list to a scalar loss. It runs once with traced
/// inputs (analytic path) and then twice per probed coordinate with plain
/// perturbed inputs (oracle path). When an input has more coordinates than
/// `max_coords`, a deterministic subset is probed.
pub fn check<F>(
    inputs: &[Tensor<f64>],
    f: F,
    step: f64,
    max_coords: usize,
    probe_seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let tape = Tape::new();
    let traced: Vec<Tensor<f64>> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&traced)?;
    let grads = tape.backward(&loss)?;

    let mut max_err = 0.0f64;
    let mut checked = 0usize;

    for (i, input) in inputs.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(&traced[i]) {
            Some(g) => g.to_vec(),
            // Input does not influence the loss; finite differences would
            // also be zero, nothing to compare.
            None => continue,
        };
        let n = input.numel();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            use rand::Rng;
            let mut rng = rng_for(probe_seed, &["gradcheck", &i.to_string()]);
            let mut picked: Vec<usize> = (0..max_coords).map(|_| rng.gen_range(0..n)).collect();
            picked.sort_unstable();
            picked.dedup();
            picked
        };

        for &j in &coords {
            let base = input.to_vec();
            let mut plus = base.clone();
            plus[j] += step;
            let mut minus = base;
            minus[j] -= step;
            let eval = |data: Vec<f64>| -> Result<f64> {
                let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
                probe[i] = Tensor::from_vec(data, input.shape())?;
                f(&probe)?.item()
            };
            let fd = (eval(plus)? - eval(minus)?) / (2.0 * step);
            let err = rel_err(analytic[j], fd);
            if err > max_err {
                max_err = err;
            }
            checked += 1;
        }
    }

    Ok(GradCheckReport {
        max_rel_err: max_err,
        coords_checked: checked,
    })
}

/// Convenience wrapper with the default step/tolerance; panics on failure
/// with a diagnostic. For use in tests.
pub fn assert_grads<F>(inputs: &[Tensor<f64>], f: F, probe_seed: u64)
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let report = check(inputs, f, DEFAULT_STEP, 24, probe_seed).expect("gradcheck eval failed");
    assert!(
        report.max_rel_err < DEFAULT_TOL,
        "gradient mismatch: max rel err {} over {} coords",
        report.max_rel_err,
        report.coords_checked
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catches_a_wrong_gradient() {
        // loss = Σ x², analytic grad would be 2x; sabotage with x³ forward.
        let x = Tensor::from_vec(vec![0.5, -1.25], &[2]).unwrap();
        let report = check(
            &[x],
            |inp| {
                // Deliberately inconsistent: forward x³ has gradient 3x²,
                // while mul(x,x) analytic path gives 2x.
                if inp[0].is_traced() {
                    inp[0].mul(&inp[0])?.sum_all()
                } else {
                    let cubed: Vec<f64> = inp[0].data().iter().map(|v| v * v * v).collect();
                    Tensor::from_vec(cubed, inp[0].shape())?.sum_all()
                }
            },
            DEFAULT_STEP,
            16,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err > 0.1);
    }

    #[test]
    fn passes_a_correct_gradient() {
        let x = Tensor::from_vec(vec![0.5, -1.25, 2.0], &[3]).unwrap();
        assert_grads(&[x], |inp| inp[0].mul(&inp[0])?.sum_all(), 1);
    }
}
