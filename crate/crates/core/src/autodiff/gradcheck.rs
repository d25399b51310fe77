//! Central-difference oracle for checking [`Tape::backward`].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::tape::{Tape, Var};

/// Gradients below this magnitude are compared absolutely rather than relatively.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Compares the reverse-mode gradient of the scalar `f` at `params` against
/// central differences `(f(x+h) − f(x−h)) / 2h`, element by element, and
/// returns the largest relative error
/// `|analytic − numeric| / max(|analytic|, |numeric|, RELATIVE_ERROR_FLOOR)`.
///
/// `f` builds its graph on the tape it is handed, from the parameter
/// variables in the order given.
pub fn finite_difference_check<F>(f: F, params: &[Tensor<f64>], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    if params.iter().any(|p| !p.all_finite()) {
        return Err(Error::NonFinite("finite_difference_check"));
    }
    let analytic = {
        let tape = Tape::new();
        let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&tape, &vars)?;
        let mut grads = tape.backward(loss)?;
        vars.iter().map(|&v| grads.take(v)).collect::<Vec<_>>()
    };

    let eval = |point: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = point.iter().map(|p| tape.param(p.clone())).collect();
        Ok(f(&tape, &vars)?.value().item())
    };

    let mut point = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for i in 0..params[pi].len() {
            let x0 = params[pi].data()[i];
            point[pi].data_mut()[i] = x0 + h;
            let up = eval(&point)?;
            point[pi].data_mut()[i] = x0 - h;
            let down = eval(&point)?;
            point[pi].data_mut()[i] = x0;

            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Pins a closure to the higher-ranked signature [`finite_difference_check`]
/// expects; closures passed inline otherwise fail lifetime inference.
pub fn graph_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    f
}
