use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::Tensor;

/// Adam hyperparameters plus per-parameter moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    /// Number of completed steps.
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(hyper: AdamHyper, params: &[Tensor]) -> Self {
        Self {
            hyper,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient rejects the whole
/// step before anything is modified.
pub fn adam_step(params: &mut [Tensor], grads: &[Vec<f64>], state: &mut AdamState) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(TrainError::Config(format!(
            "adam: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.len() || state.m[i].len() != g.len() || state.v[i].len() != g.len() {
            return Err(TrainError::Config(format!("adam: shape mismatch at parameter {i}")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::NonFiniteGradient { param: i });
        }
    }
    let AdamHyper { lr, beta1, beta2, eps } = state.hyper;
    state.t += 1;
    let c1 = 1.0 - beta1.powf(state.t as f64);
    let c2 = 1.0 - beta2.powf(state.t as f64);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(p: f64) -> Vec<Tensor> {
        vec![Tensor::new(vec![1], vec![p]).unwrap()]
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar(0.0);
        let mut s = AdamState::new(AdamHyper::default(), &p);
        adam_step(&mut p, &[vec![1.0]], &mut s).unwrap();
        assert!((p[0].data()[0] + 3e-4 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = scalar(0.7);
        let mut s = AdamState::new(AdamHyper::default(), &p);
        adam_step(&mut p, &[vec![0.0]], &mut s).unwrap();
        assert_eq!(p[0].data()[0], 0.7);
    }

    #[test]
    fn rejects_non_finite_without_mutation() {
        let mut p = scalar(0.7);
        let mut s = AdamState::new(AdamHyper::default(), &p);
        let before = s.clone();
        assert!(matches!(
            adam_step(&mut p, &[vec![f64::NAN]], &mut s),
            Err(TrainError::NonFiniteGradient { param: 0 })
        ));
        assert_eq!(s, before);
        assert_eq!(p[0].data()[0], 0.7);
    }

    #[test]
    fn descends_quadratic() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(AdamHyper { lr: 5e-3, ..AdamHyper::default() }, &p);
        let mut prev = 1.0f64;
        for _ in 0..200 {
            let g = 2.0 * p[0].data()[0];
            adam_step(&mut p, &[vec![g]], &mut s).unwrap();
            let now = p[0].data()[0];
            assert!(now.abs() <= prev.abs());
            prev = now;
        }
        assert!(prev.abs() < 0.5);
    }
}
