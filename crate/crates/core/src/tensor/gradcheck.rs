use serde::{Deserialize, Serialize};

use super::{ParamStore, Real, Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};

/// Default central-difference step.
pub const DEFAULT_EPS: Real = 1e-6;

/// Outcome of a finite-difference gradient comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// max over coordinates of `|a − n| / max(1e-8, |a| + |n|)`.
    pub max_rel_error: Real,
    /// `(tensor index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub worst_analytic: Real,
    pub worst_numeric: Real,
    pub coordinates: usize,
}

fn rel_error(a: Real, n: Real) -> Real {
    (a - n).abs() / (1e-8 as Real).max(a.abs() + n.abs())
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// `f` receives a fresh tape and one leaf per entry of `params`.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: Real) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(invalid(format!("grad_check eps must be positive, got {eps}")));
    }
    let eval = |values: &[Tensor]| -> Result<Real> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let v = tape.value(loss);
        if v.shape() != [1, 1] {
            return Err(Error::NonScalarLoss(v.rows(), v.cols()));
        }
        let v = v.data()[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check objective".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            grads
                .of(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        coordinates: 0,
    };
    let mut work = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for c in 0..p.len() {
            let orig = p.data()[c];
            work[pi].data_mut()[c] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[c] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[c];
            let err = rel_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((pi, c));
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// [`grad_check`] over every tensor of a parameter store, for objectives that
/// bind parameters with [`Tape::param`].
pub fn grad_check_store<F>(f: F, store: &ParamStore, eps: Real) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let values = store.values();
    grad_check(
        |tape, vars| {
            // Leaves were created in store order, so the store copy carries the
            // perturbed values and the tape maps each id onto its leaf.
            let mut local = store.clone();
            let current: Vec<Tensor> = vars.iter().map(|&v| tape.value(v).clone()).collect();
            local.set_values(current)?;
            tape.adopt_params(vars);
            f(tape, &local)
        },
        &values,
        eps,
    )
}
