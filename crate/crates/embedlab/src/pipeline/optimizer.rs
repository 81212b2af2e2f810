//! Adam updates over named f32 tensors, with moments kept at f32 so a
//! checkpointed run resumes bitwise.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::Tensor;
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moments per tensor name.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState { m: BTreeMap::new(), v: BTreeMap::new(), hyper: AdamHyper::default() }
    }
}

/// One Adam update for one tensor. `t` is the 1-based update count for
/// bias correction. Rejects non-finite gradients before touching any
/// state.
pub fn optimize_step(
    name: &str,
    param: &mut Tensor,
    grad: &Matrix,
    lr: f64,
    t: u64,
    state: &mut AdamState,
) -> Result<()> {
    if grad.rows() != param.rows || grad.cols() != param.cols {
        return Err(Error::Shape(format!(
            "optimize_step {}: grad {}x{} vs param {}x{}",
            name,
            grad.rows(),
            grad.cols(),
            param.rows,
            param.cols
        )));
    }
    for (i, g) in grad.data().iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient for {} has {} at flat index {}; step rejected",
                name, g, i
            )));
        }
    }
    let hyper = state.hyper;
    let m = state
        .m
        .entry(name.to_string())
        .or_insert_with(|| Tensor::zeros(param.rows, param.cols));
    let v = state
        .v
        .entry(name.to_string())
        .or_insert_with(|| Tensor::zeros(param.rows, param.cols));

    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);
    for i in 0..param.data.len() {
        let g = grad.data()[i];
        let mi = hyper.beta1 * m.data[i] as f64 + (1.0 - hyper.beta1) * g;
        let vi = hyper.beta2 * v.data[i] as f64 + (1.0 - hyper.beta2) * g * g;
        m.data[i] = mi as f32;
        v.data[i] = vi as f32;
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        let p = param.data[i] as f64 - lr * m_hat / (v_hat.sqrt() + hyper.eps);
        param.data[i] = p as f32;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut p = Tensor { rows: 1, cols: 2, data: vec![1.0, -2.0] };
        let g = Matrix::zeros(1, 2);
        let mut st = AdamState::new();
        optimize_step("p", &mut p, &g, 0.1, 1, &mut st).unwrap();
        assert_eq!(p.data, vec![1.0, -2.0]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(p) = ||p||^2, grad = 2p.
        let mut p = Tensor { rows: 1, cols: 3, data: vec![1.0, -0.5, 0.25] };
        let mut st = AdamState::new();
        for t in 1..=500u64 {
            let grad =
                Matrix::from_vec(1, 3, p.data.iter().map(|x| 2.0 * *x as f64).collect()).unwrap();
            optimize_step("p", &mut p, &grad, 1e-2, t, &mut st).unwrap();
        }
        let norm: f64 = p.data.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm after 500 steps: {}", norm);
    }

    #[test]
    fn non_finite_grad_rejects_step_without_mutation() {
        let mut p = Tensor { rows: 1, cols: 2, data: vec![1.0, 1.0] };
        let g = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let mut st = AdamState::new();
        optimize_step("p", &mut p, &g, 0.1, 1, &mut st).unwrap();
        let snapshot = (p.clone(), st.m.clone(), st.v.clone());
        // Bypass Matrix's finite check to simulate a corrupted gradient.
        let mut bad = Matrix::zeros(1, 2);
        bad.data_mut()[0] = f64::NAN;
        let err = optimize_step("p", &mut p, &bad, 0.1, 2, &mut st).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, snapshot.0);
        assert_eq!(st.m, snapshot.1);
        assert_eq!(st.v, snapshot.2);
    }

    #[test]
    fn deterministic_given_same_inputs() {
        let run = || {
            let mut p = Tensor { rows: 1, cols: 2, data: vec![0.3, -0.7] };
            let mut st = AdamState::new();
            for t in 1..=50u64 {
                let grad = Matrix::from_vec(
                    1,
                    2,
                    p.data.iter().map(|x| (*x as f64).sin() + 0.1).collect(),
                )
                .unwrap();
                optimize_step("p", &mut p, &grad, 3e-3, t, &mut st).unwrap();
            }
            p.data
        };
        assert_eq!(run(), run());
    }
}
