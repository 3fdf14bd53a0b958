//! Finite-difference verification of reverse-mode gradients.
//!
//! `grad_check` evaluates a scalar function twice per parameter element
//! (central differences) and compares against the gradients produced by
//! [`Tape::backward`]. The relative error denominator is floored so
//! near-zero gradients do not blow up the ratio: central differences at
//! `h = 1e-5` on an O(1) loss carry ~1e-11 of truncation and round-off
//! noise, so gradients below [`DENOMINATOR_FLOOR`] are compared against
//! that floor rather than against their own magnitude.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, TensorId};

/// Elements whose analytic and numeric gradients are both below this
/// magnitude count as agreeing up to the floor. Sits two decades above the
/// f64 central-difference noise floor.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Per-parameter relative error of every element, in parameter order.
    pub element_errors: Vec<(String, Vec<f64>)>,
    pub max_relative_error: f64,
    /// Parameter name and element index of the worst error.
    pub worst: Option<(String, usize)>,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn summary(&self) -> String {
        match &self.worst {
            Some((name, idx)) => format!(
                "max relative error {:.3e} at {}[{}] (tolerance {:.1e}): {}",
                self.max_relative_error,
                name,
                idx,
                self.tolerance,
                if self.pass { "pass" } else { "FAIL" }
            ),
            None => "no parameters checked".to_string(),
        }
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(DENOMINATOR_FLOOR)
}

fn eval_scalar<F>(build: &F, params: &[(String, Tensor)]) -> Result<f64>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    if tape.shape(loss) != [1] {
        return Err(Error::Contract(format!(
            "grad_check requires a scalar function, got shape {:?}",
            tape.shape(loss)
        )));
    }
    let v = tape.data(loss)[0];
    if !v.is_finite() {
        return Err(Error::Evaluation(format!("function value is not finite: {v}")));
    }
    Ok(v)
}

/// Compares analytic gradients of `build` against central differences
/// `(f(p+h) - f(p-h)) / 2h`, element by element.
///
/// `build` must be deterministic given the parameter values: it is re-run
/// once per perturbation on a fresh tape.
#[allow(clippy::needless_range_loop)] // elements are perturbed by index
pub fn grad_check<F>(
    params: &[(String, Tensor)],
    build: F,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    if h <= 0.0 {
        return Err(Error::Contract(format!("step size must be positive, got {h}")));
    }

    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params
        .iter()
        .map(|(_, t)| tape.leaf(t.clone().with_grad()))
        .collect();
    let loss = build(&mut tape, &ids)?;
    if tape.shape(loss) != [1] {
        return Err(Error::Contract(format!(
            "grad_check requires a scalar function, got shape {:?}",
            tape.shape(loss)
        )));
    }
    if !tape.value(loss).is_finite() {
        return Err(Error::Evaluation("function value is not finite".into()));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(params)
        .map(|(&id, (_, t))| {
            tape.grad(id).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();

    // Numeric pass.
    let mut element_errors = Vec::with_capacity(params.len());
    let mut max_err = 0.0f64;
    let mut worst = None;
    for (p, (name, _)) in params.iter().enumerate() {
        let mut errs = Vec::with_capacity(params[p].1.len());
        for e in 0..params[p].1.len() {
            let mut plus: Vec<(String, Tensor)> = params.to_vec();
            plus[p].1.data[e] += h;
            let mut minus: Vec<(String, Tensor)> = params.to_vec();
            minus[p].1.data[e] -= h;
            let numeric = (eval_scalar(&build, &plus)? - eval_scalar(&build, &minus)?) / (2.0 * h);
            let err = relative_error(analytic[p][e], numeric);
            if err > max_err {
                max_err = err;
                worst = Some((name.clone(), e));
            }
            errs.push(err);
        }
        element_errors.push((name.clone(), errs));
    }

    Ok(GradCheckReport {
        element_errors,
        max_relative_error: max_err,
        worst,
        tolerance: tol,
        pass: max_err < tol,
    })
}
