//! Central finite differences — the independent gradient oracle.
//!
//! Deliberately knows nothing about the tape: it only re-evaluates a
//! scalar function at perturbed parameter values.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Central-difference gradients of `f` w.r.t. every entry of every
/// parameter matrix: (f(p + eps e_i) - f(p - eps e_i)) / (2 eps).
pub fn finite_diff<F>(mut f: F, params: &[Matrix], eps: f64) -> Result<Vec<Matrix>>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Domain(format!("finite_diff: eps must be > 0, got {}", eps)));
    }
    let mut work: Vec<Matrix> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut grad = Matrix::zeros(params[pi].rows(), params[pi].cols());
        for i in 0..params[pi].data().len() {
            let orig = params[pi].data()[i];
            work[pi].data_mut()[i] = orig + eps;
            let plus = probe(&mut f, &work, pi, i)?;
            work[pi].data_mut()[i] = orig - eps;
            let minus = probe(&mut f, &work, pi, i)?;
            work[pi].data_mut()[i] = orig;
            grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
        grads.push(grad);
    }
    Ok(grads)
}

fn probe<F>(f: &mut F, work: &[Matrix], pi: usize, i: usize) -> Result<f64>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    let v = f(work)?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!(
            "finite_diff: f returned {} at parameter {} coordinate {}",
            v, pi, i
        )));
    }
    Ok(v)
}

/// Max over all entries of |g - f| / max(|g|, |f|, 1). Relative where the
/// magnitudes are large, absolute near zero.
pub fn max_rel_error(analytic: &[Matrix], numeric: &[Matrix]) -> Result<f64> {
    if analytic.len() != numeric.len() {
        return Err(Error::Shape(format!(
            "max_rel_error: {} vs {} gradients",
            analytic.len(),
            numeric.len()
        )));
    }
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        if !a.same_shape(n) {
            return Err(Error::Shape("max_rel_error: gradient shape mismatch".into()));
        }
        for (ga, gn) in a.data().iter().zip(n.data()) {
            let denom = ga.abs().max(gn.abs()).max(1.0);
            worst = worst.max((ga - gn).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_square_at_three() {
        let p = [Matrix::scalar(3.0)];
        let g = finite_diff(|ps| Ok(ps[0].data()[0] * ps[0].data()[0]), &p, 1e-5).unwrap();
        assert!((g[0].data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_of_sum_of_squares() {
        let p = [Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap()];
        let g = finite_diff(
            |ps| Ok(ps[0].data().iter().map(|v| v * v).sum()),
            &p,
            1e-5,
        )
        .unwrap();
        assert!((g[0].data()[0] - 2.0).abs() < 1e-6);
        assert!((g[0].data()[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_probe_reports_coordinate() {
        let p = [Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap()];
        let err = finite_diff(
            |ps| {
                let v = ps[0].data()[1];
                Ok(if v > 2.0 { f64::NAN } else { v })
            },
            &p,
            1e-5,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("parameter 0") && msg.contains("coordinate 1"), "got: {}", msg);
    }

    #[test]
    fn rejects_non_positive_eps() {
        let p = [Matrix::scalar(1.0)];
        assert!(finite_diff(|_| Ok(0.0), &p, 0.0).is_err());
    }
}
