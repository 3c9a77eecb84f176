//! Finite-difference verification of reverse-mode gradients.
//!
//! `check_gradients` takes a tape-building closure, runs one backward pass
//! for the analytic gradients, then re-evaluates the loss with each parameter
//! element nudged by ±step (central differences) and reports the worst
//! relative disagreement.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Worst-case comparison for one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub param_index: usize,
    pub max_rel_error: f64,
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Relative error scaled by max(|a|, |n|, 1): relative for large gradients,
/// absolute near zero where central differences bottom out on rounding.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares reverse-mode gradients of `build`'s scalar output against
/// central finite differences over every element of every parameter.
///
/// `build` must be deterministic given the parameter values. The parameters
/// passed in must have `requires_grad` set so the backward pass reaches them.
pub fn check_gradients<F>(
    build: F,
    params: &[Tensor],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-2).contains(&step) {
        return Err(Error::contract(format!(
            "check_gradients: step {step} outside [1e-6, 1e-2]"
        )));
    }
    if params.is_empty() {
        return Err(Error::contract("check_gradients: no parameters"));
    }

    // Analytic pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p)).collect();
    let loss = build(&mut tape, &vars)?;
    if tape.value(loss).len() != 1 {
        return Err(Error::contract("check_gradients: loss must be scalar"));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| tape.grad(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    // Numeric passes.
    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|p| t.leaf(p)).collect();
        let l = build(&mut t, &vs)?;
        Ok(t.value(l)[0])
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    let mut overall = 0.0f64;
    for pi in 0..params.len() {
        let mut worst = ParamCheck {
            param_index: pi,
            max_rel_error: 0.0,
            worst_element: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for j in 0..params[pi].numel() {
            let original = work[pi].values()[j];
            work[pi].values_mut()[j] = original + step;
            let plus = eval(&work)?;
            work[pi].values_mut()[j] = original - step;
            let minus = eval(&work)?;
            work[pi].values_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let err = rel_error(analytic[pi][j], numeric);
            if err > worst.max_rel_error {
                worst.max_rel_error = err;
                worst.worst_element = j;
                worst.analytic = analytic[pi][j];
                worst.numeric = numeric;
            }
        }
        overall = overall.max(worst.max_rel_error);
        per_param.push(worst);
    }

    Ok(GradCheckReport {
        per_param,
        max_rel_error: overall,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradients_are_exact() {
        // loss = sum(p^2): analytic 2p, finite differences exact up to rounding.
        let p = Tensor::param(vec![1, 4], vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        let report = check_gradients(
            |tape, vars| {
                let sq = tape.mul(vars[0], vars[0])?;
                Ok(tape.sum_all(sq))
            },
            &[p],
            1e-4,
            1e-7,
        )
        .unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn softmax_cross_entropy_composition_checks_out() {
        let logits = Tensor::param(
            vec![4, 3],
            vec![
                0.3, -0.7, 1.2, 0.05, 0.4, -0.2, -1.1, 0.9, 0.6, 0.8, -0.3, 0.1,
            ],
        )
        .unwrap();
        let report = check_gradients(
            |tape, vars| {
                let probs = tape.softmax_t(vars[0], 0.7)?;
                tape.cross_entropy(probs, &[2, 1, 0, 1])
            },
            &[logits],
            1e-4,
            1e-5,
        )
        .unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn step_outside_domain_is_rejected() {
        let p = Tensor::param(vec![1], vec![1.0]).unwrap();
        let build = |tape: &mut Tape, vars: &[Var]| {
            let sq = tape.mul(vars[0], vars[0])?;
            Ok(tape.sum_all(sq))
        };
        assert!(check_gradients(build, &[p.clone()], 1e-7, 1e-4).is_err());
        assert!(check_gradients(build, &[p], 0.1, 1e-4).is_err());
    }
}
