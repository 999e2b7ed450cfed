use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares gradients computed on the tape against central differences.
///
/// `build` records a scalar loss given one gradient-requiring leaf per entry
/// of `params`. Returns the largest per-coordinate relative error
/// `|analytic − numeric| / (|analytic| + |numeric| + 1e-12)`.
pub fn grad_check<F>(build: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();
    compare_with_central_differences(
        |ps| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
            let loss = build(&mut tape, &vars)?;
            Ok(tape.value(loss).item())
        },
        &analytic,
        params,
        eps,
    )
}

/// Relative-error check of supplied `analytic` gradients against central
/// differences of `value`.
pub fn compare_with_central_differences<F>(
    value: F,
    analytic: &[Tensor],
    params: &[Tensor],
    eps: f64,
) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::InvalidArgument(format!("step {eps} outside (0, 1e-2]")));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape("grad_check", "one gradient per parameter required"));
    }
    let base = value(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("objective evaluated to {base}")));
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst: f64 = 0.0;
    for (pi, grad) in analytic.iter().enumerate() {
        for k in 0..params[pi].len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + eps;
            let up = value(&work)?;
            work[pi].data_mut()[k] = orig - eps;
            let down = value(&work)?;
            work[pi].data_mut()[k] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!("objective near parameter {pi}[{k}]")));
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data()[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let coeffs = Tensor::row(vec![0.5, -3.0, 2.25, 7.0]);
        let err = grad_check(
            |tape, v| {
                let c = tape.constant(coeffs.clone());
                let p = tape.mul(v[0], c)?;
                Ok(tape.sum(p))
            },
            &[Tensor::row(vec![1.0, 2.0, -1.0, 0.3])],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let theta = vec![Tensor::row(vec![0.4, -0.7, 1.3])];
        let f = |ps: &[Tensor]| -> Result<f64> { Ok(ps[0].data().iter().map(|x| x.sin() * x).sum()) };
        let mut analytic: Vec<f64> = theta[0].data().iter().map(|x| x.cos() * x + x.sin()).collect();
        let good = compare_with_central_differences(f, &[Tensor::row(analytic.clone())], &theta, 1e-5).unwrap();
        assert!(good < 1e-8);
        analytic[1] *= 2.0;
        let bad = compare_with_central_differences(f, &[Tensor::row(analytic)], &theta, 1e-5).unwrap();
        assert!(bad > 1e-2);
    }

    #[test]
    fn non_finite_objective_is_error() {
        let r = compare_with_central_differences(|_| Ok(f64::NAN), &[Tensor::scalar(0.0)], &[Tensor::scalar(1.0)], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn step_out_of_range_is_error() {
        let r = compare_with_central_differences(|_| Ok(0.0), &[Tensor::scalar(0.0)], &[Tensor::scalar(1.0)], 0.5);
        assert!(r.is_err());
    }
}
