//! Central-difference verification of tape gradients.
//!
//! The loss closure is evaluated through the tape for the analytic gradient
//! and re-evaluated (value only) under elementwise perturbations for the
//! numeric one. The closure must be deterministic across calls: freeze any
//! noise by deriving it from a fixed seed inside the closure.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::backend::TapeExec;
use super::params::ParamStore;
use super::tape::{Tape, Value};

/// Deviations at or below this are accepted regardless of relative size.
const ABS_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub max_rel_dev: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub eps: f64,
    pub rtol: f64,
    pub per_param: BTreeMap<String, ParamCheck>,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.per_param.values().all(|c| c.pass)
    }

    pub fn max_rel_dev(&self) -> f64 {
        self.per_param
            .values()
            .map(|c| c.max_rel_dev)
            .fold(0.0, f64::max)
    }
}

fn eval_value<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&TapeExec) -> Result<Value>,
{
    let tape = Tape::new();
    let exec = TapeExec::new(&tape, store);
    let out = f(&exec)?;
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(Error::NonScalarOutput(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Compare analytic gradients of `f` against central differences for every
/// `requires_grad` parameter in `store`.
pub fn grad_check<F>(store: &ParamStore, eps: f64, rtol: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&TapeExec) -> Result<Value>,
{
    let tape = Tape::new();
    let exec = TapeExec::new(&tape, store);
    let out = f(&exec)?;
    let loss = tape.value(out);
    if loss.numel() != 1 {
        return Err(Error::NonScalarOutput(loss.shape().to_vec()));
    }
    if !loss.item().is_finite() {
        return Err(Error::NonFinite {
            context: "grad_check loss".to_string(),
        });
    }
    let analytic = tape.backward(out)?;

    let mut per_param = BTreeMap::new();
    for (name, grad) in &analytic {
        let mut check = ParamCheck {
            max_rel_dev: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            pass: true,
        };
        for i in 0..grad.numel() {
            let mut plus = store.clone();
            plus.get_mut(name)?.data_mut()[i] += eps;
            let l_plus = eval_value(&plus, &f)?;

            let mut minus = store.clone();
            minus.get_mut(name)?.data_mut()[i] -= eps;
            let l_minus = eval_value(&minus, &f)?;

            if !l_plus.is_finite() || !l_minus.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("grad_check perturbation of `{name}`[{i}]"),
                });
            }
            let numeric = (l_plus - l_minus) / (2.0 * eps);
            let a = grad.data()[i];
            // Near-zero gradients are compared absolutely: central
            // differences carry ~ulp(loss)/eps of roundoff noise.
            let diff = (a - numeric).abs();
            let rel = if diff <= ABS_TOL {
                0.0
            } else {
                diff / a.abs().max(numeric.abs()).max(ABS_TOL)
            };
            if rel > check.max_rel_dev {
                check.max_rel_dev = rel;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        check.pass = check.max_rel_dev <= rtol;
        per_param.insert(name.clone(), check);
    }

    Ok(GradCheckReport {
        eps,
        rtol,
        per_param,
    })
}
