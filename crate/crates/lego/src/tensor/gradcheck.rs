//! Finite-difference verification of analytic gradients. Run with `F = f64`:
//! central differences in single precision are dominated by rounding noise.

use super::{no_grad, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic - central| / max(1, |analytic|)
    pub max_rel_err: f64,
    /// (parameter index, coordinate) of the worst error
    pub worst: Option<(usize, usize)>,
    /// first coordinate producing a non-finite value, if any
    pub non_finite: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.non_finite.is_none() && self.max_rel_err <= tol
    }
}

/// Check d f(x) / d x at `point` against central differences with step `eps`.
/// `f` must reduce to a scalar.
pub fn grad_check<F, Fun>(f: Fun, shape: &[usize], point: &[F], eps: f64) -> Result<GradCheckReport>
where
    F: Scalar,
    Fun: Fn(&Tensor<F>) -> Result<Tensor<F>>,
{
    let x = Tensor::leaf(shape, point.to_vec())?;
    let loss = f(&x)?;
    if loss.numel() != 1 {
        return Err(Error::Contract(format!(
            "grad_check: f returned shape {:?}, expected scalar",
            loss.shape()
        )));
    }
    loss.backward()?;
    let analytic = x.grad().unwrap_or_else(|| vec![F::ZERO; point.len()]);

    let eval = |p: Vec<F>| -> Result<f64> {
        let t = Tensor::from_vec(shape, p)?;
        Ok(no_grad(|| f(&t))?.item()?.to_f64())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        non_finite: None,
    };
    for i in 0..point.len() {
        let mut plus = point.to_vec();
        plus[i] += F::from_f64(eps);
        let mut minus = point.to_vec();
        minus[i] -= F::from_f64(eps);
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        record(&mut report, 0, i, analytic[i].to_f64(), numeric);
    }
    Ok(report)
}

/// Check the gradient of a scalar-valued closure with respect to every
/// non-frozen parameter in `params`, perturbing each coordinate in place.
/// The closure must be deterministic for fixed parameter values.
pub fn grad_check_params<F, Fun>(
    f: Fun,
    params: &[Parameter<F>],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Scalar,
    Fun: Fn() -> Result<Tensor<F>>,
{
    for p in params {
        p.zero_grad();
    }
    let loss = f()?;
    if loss.numel() != 1 {
        return Err(Error::Contract(format!(
            "grad_check_params: f returned shape {:?}, expected scalar",
            loss.shape()
        )));
    }
    loss.backward()?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        non_finite: None,
    };
    for (pi, p) in params.iter().enumerate() {
        if p.frozen() {
            continue;
        }
        let analytic = p
            .grad()
            .unwrap_or_else(|| vec![F::ZERO; p.tensor().numel()]);
        let base = p.tensor().to_vec();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += F::from_f64(eps);
            p.tensor().set_data(plus)?;
            let fp = no_grad(&f)?.item()?.to_f64();

            let mut minus = base.clone();
            minus[i] -= F::from_f64(eps);
            p.tensor().set_data(minus)?;
            let fm = no_grad(&f)?.item()?.to_f64();

            p.tensor().set_data(base.clone())?;
            let numeric = (fp - fm) / (2.0 * eps);
            record(&mut report, pi, i, analytic[i].to_f64(), numeric);
        }
    }
    Ok(report)
}

fn record(report: &mut GradCheckReport, pi: usize, i: usize, analytic: f64, numeric: f64) {
    if !analytic.is_finite() || !numeric.is_finite() {
        if report.non_finite.is_none() {
            report.non_finite = Some((pi, i));
        }
        return;
    }
    let rel = (analytic - numeric).abs() / analytic.abs().max(1.0);
    if rel > report.max_rel_err {
        report.max_rel_err = rel;
        report.worst = Some((pi, i));
    }
}
