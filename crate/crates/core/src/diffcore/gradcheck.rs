//! Central-difference verification of tape gradients.

use super::params::{Bindings, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    /// Worst relative error per parameter, in parameter-name order.
    pub max_rel_error: Vec<(String, f64)>,
    pub eps: f64,
    pub tol: f64,
    pub pass: bool,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Compares the tape gradient of a scalar computation with
/// `(f(θ+eps) − f(θ−eps)) / (2·eps)` for every coordinate of every parameter.
/// Relative error is `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(params: &ParamSet, eps: f64, tol: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = f(&mut tape, &bound)?;
    tape.backward(out)?;

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let o = f(&mut t, &b)?;
        Ok(t.value(o).values()[0])
    };

    let mut probe = params.clone();
    let mut report = Vec::with_capacity(params.len());
    for (name, tensor) in params.iter() {
        let var = bound.get(name)?;
        let zeros;
        let analytic = match tape.grad(var) {
            Some(g) => g,
            None => {
                // parameter does not influence the output
                zeros = vec![0.0; tensor.len()];
                &zeros
            }
        };
        let mut worst: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate() {
            let original = tensor.values()[i];
            probe.get_mut(name).unwrap().values_mut()[i] = original + eps;
            let up = eval(&probe)?;
            probe.get_mut(name).unwrap().values_mut()[i] = original - eps;
            let down = eval(&probe)?;
            probe.get_mut(name).unwrap().values_mut()[i] = original;
            let numeric = (up - down) / (2.0 * eps);
            if !a.is_finite() || !numeric.is_finite() {
                return Err(Error::GradCheck {
                    param: name.to_string(),
                    index: i,
                    message: format!("non-finite gradient (analytic {a}, numeric {numeric})"),
                });
            }
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
        report.push((name.to_string(), worst));
    }
    let pass = report.iter().all(|(_, e)| *e < tol);
    Ok(GradReport {
        max_rel_error: report,
        eps,
        tol,
        pass,
    })
}
