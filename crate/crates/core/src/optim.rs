//! Adam over named parameter tensors.

use std::collections::BTreeMap;

use crate::error::{reject, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { step_size: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, keyed by parameter name.
#[derive(Clone, Debug, Default)]
pub struct AdamState<T> {
    pub step: u64,
    moments: BTreeMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        Self { step: 0, moments: BTreeMap::new() }
    }
}

/// One Adam update. `params` and `grads` must agree in names and shapes.
///
/// A non-finite gradient aborts the step before any parameter is modified;
/// `epoch` is reported in the resulting error.
pub fn adam_step<T: Scalar>(
    params: &mut [(String, &mut Tensor<T>)],
    grads: &[(String, Tensor<T>)],
    state: &mut AdamState<T>,
    hyper: &AdamConfig,
    epoch: usize,
) -> Result<()> {
    if params.len() != grads.len() {
        return reject("adam: parameter and gradient lists differ in length");
    }
    for ((pn, p), (gn, g)) in params.iter().zip(grads) {
        if pn != gn || p.shape() != g.shape() {
            return reject(format!("adam: parameter {pn} does not match gradient {gn}"));
        }
        if !g.all_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    state.step += 1;
    let b1 = T::lit(hyper.beta1);
    let b2 = T::lit(hyper.beta2);
    let t = state.step as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let lr = T::lit(hyper.step_size);
    let eps = T::lit(hyper.epsilon);
    for ((name, p), (_, g)) in params.iter_mut().zip(grads) {
        let (m, v) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (vec![T::zero(); g.len()], vec![T::zero(); g.len()]));
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *w = *w - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    fn step(w: &mut Tensor<f64>, g: f64, state: &mut AdamState<f64>, hyper: &AdamConfig) -> Result<()> {
        let mut params = vec![("w".to_string(), w)];
        adam_step(&mut params, &[("w".to_string(), scalar(g))], state, hyper, 0)
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut w = scalar(1.25);
        let mut st = AdamState::new();
        for _ in 0..5 {
            step(&mut w, 0.0, &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(w.data(), &[1.25]);
    }

    #[test]
    fn first_step_descends() {
        let mut w = scalar(0.0);
        step(&mut w, 1.0, &mut AdamState::new(), &AdamConfig::default()).unwrap();
        assert!(w.data()[0] < 0.0);
    }

    #[test]
    fn quadratic_converges_within_hundred_steps() {
        // f(w) = (w - 3)^2, minimiser 3. Adam's per-step movement is about the
        // step size, so 100 steps need a step of order 0.1 to cover the distance.
        let hyper = AdamConfig { step_size: 0.1, ..AdamConfig::default() };
        let mut w = scalar(0.0);
        let mut st = AdamState::new();
        for _ in 0..100 {
            let g = 2.0 * (w.data()[0] - 3.0);
            step(&mut w, g, &mut st, &hyper).unwrap();
        }
        assert!((w.data()[0] - 3.0).abs() < 0.1, "w = {}", w.data()[0]);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut w = scalar(0.0);
        let err = step(&mut w, f64::NAN, &mut AdamState::new(), &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { epoch: 0 }));
        assert_eq!(w.data(), &[0.0]);
    }

    #[test]
    fn deterministic_given_inputs() {
        let run = || {
            let mut w = scalar(0.5);
            let mut st = AdamState::new();
            for i in 0..10 {
                step(&mut w, (i as f64).cos(), &mut st, &AdamConfig::default()).unwrap();
            }
            w.data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
