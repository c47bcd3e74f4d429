//! Central finite-difference gradient verification.

use crate::error::{Error, Result};
use crate::kernel::Parameter;

/// A scalar function of a fixed set of parameters.
pub trait Objective {
    fn params_mut(&mut self) -> Vec<&mut Parameter>;

    /// Loss at the current parameter values. With `accumulate_grad`, also
    /// adds ∂loss/∂θ into every parameter's `grad`.
    fn evaluate(&mut self, accumulate_grad: bool) -> Result<f64>;
}

/// Adapter for closures over an owned parameter list.
pub struct FnObjective<F> {
    pub params: Vec<Parameter>,
    pub f: F,
}

impl<F> FnObjective<F>
where
    F: FnMut(&mut [Parameter], bool) -> Result<f64>,
{
    pub fn new(params: Vec<Parameter>, f: F) -> Self {
        FnObjective { params, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: FnMut(&mut [Parameter], bool) -> Result<f64>,
{
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }

    fn evaluate(&mut self, accumulate_grad: bool) -> Result<f64> {
        (self.f)(&mut self.params, accumulate_grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_relative_error < threshold
    }
}

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

pub fn gradcheck<O: Objective + ?Sized>(obj: &mut O, eps: f64) -> Result<GradCheckReport> {
    gradcheck_scaled(obj, eps, 1.0)
}

/// As [`gradcheck`], with the analytic gradient multiplied by `grad_scale`
/// before comparison. A scale other than 1 simulates a broken backward pass.
pub fn gradcheck_scaled<O: Objective + ?Sized>(
    obj: &mut O,
    eps: f64,
    grad_scale: f64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "gradcheck eps {eps} must be > 0"
        )));
    }
    for p in obj.params_mut() {
        p.zero_grad();
    }
    let base = obj.evaluate(true)?;
    if !base.is_finite() {
        return Err(Error::NumericFault(format!("objective returned {base}")));
    }
    let analytic: Vec<(String, Vec<f64>)> = obj
        .params_mut()
        .into_iter()
        .map(|p| {
            let g = p.grad.data().iter().map(|g| g * grad_scale).collect();
            (p.name.clone(), g)
        })
        .collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        entries_checked: 0,
    };
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let original = obj.params_mut()[pi].value.data()[j];
            obj.params_mut()[pi].value.data_mut()[j] = original + eps;
            let plus = obj.evaluate(false);
            obj.params_mut()[pi].value.data_mut()[j] = original - eps;
            let minus = obj.evaluate(false);
            obj.params_mut()[pi].value.data_mut()[j] = original;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NumericFault(format!(
                    "objective non-finite when perturbing `{name}`[{j}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error || report.worst_param.is_empty() {
                report.max_relative_error = err;
                report.worst_param = name.clone();
                report.worst_index = j;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Tensor;

    fn square() -> FnObjective<impl FnMut(&mut [Parameter], bool) -> Result<f64>> {
        FnObjective::new(
            vec![Parameter::new("x", Tensor::scalar(3.0))],
            |ps: &mut [Parameter], grad| {
                let x = ps[0].value.data()[0];
                if grad {
                    ps[0].grad.data_mut()[0] += 2.0 * x;
                }
                Ok(x * x)
            },
        )
    }

    #[test]
    fn square_is_exact() {
        let mut obj = square();
        let r = gradcheck(&mut obj, 1e-5).unwrap();
        assert_eq!(r.worst_analytic, 6.0);
        assert!((r.worst_numeric - 6.0).abs() < 1e-9);
        assert!(r.max_relative_error < 1e-9);
        // value restored
        assert_eq!(obj.params[0].value.data()[0], 3.0);
    }

    #[test]
    fn constant_has_zero_error() {
        let mut obj = FnObjective::new(
            vec![Parameter::new("x", Tensor::vector(vec![1.0, 2.0]))],
            |_: &mut [Parameter], _| Ok(4.2),
        );
        let r = gradcheck(&mut obj, 1e-5).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
        assert_eq!(r.worst_numeric, 0.0);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        // |1.1g − g| / (1.1|g| + |g|) = 0.1 / 2.1
        let r = gradcheck_scaled(&mut square(), 1e-5, 1.1).unwrap();
        assert!((r.max_relative_error - 0.1 / 2.1).abs() < 1e-8);
        assert!(!r.passes(1e-4));
    }

    #[test]
    fn non_finite_objective_faults() {
        let mut obj = FnObjective::new(
            vec![Parameter::new("x", Tensor::scalar(0.0))],
            |_: &mut [Parameter], _| Ok(f64::NAN),
        );
        assert!(matches!(
            gradcheck(&mut obj, 1e-5),
            Err(Error::NumericFault(_))
        ));
        assert!(matches!(
            gradcheck(&mut square(), 0.0),
            Err(Error::InvalidConfig(_))
        ));
    }
}
