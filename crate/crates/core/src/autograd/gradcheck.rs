//! Central finite-difference gradient checking.

use super::{Tape, TensorRef};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Evaluate the loss `f` builds from `params` on a fresh tape.
fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[TensorRef]) -> Result<TensorRef>,
{
    let mut tape = Tape::new();
    let refs = params
        .iter()
        .map(|p| tape.param_from(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &refs)?;
    let v = tape.value(&loss).item()?;
    if !v.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(v)
}

/// Central-difference estimate `(f(p + h) - f(p - h)) / 2h` for every
/// coordinate of every parameter. Uses forward passes only.
pub fn numerical_gradient<F>(f: F, params: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[TensorRef]) -> Result<TensorRef>,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Tensor::zeros(params[p].shape())?;
        for i in 0..params[p].len() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + h;
            let plus = evaluate(&f, &work)?;
            work[p].data_mut()[i] = orig - h;
            let minus = evaluate(&f, &work)?;
            work[p].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Largest `|analytic - fd| / max(1, |analytic|)` over all coordinates.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[TensorRef]) -> Result<TensorRef>,
{
    let mut tape = Tape::new();
    let refs = params
        .iter()
        .map(|p| tape.param_from(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &refs)?;
    if !tape.value(&loss).all_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let analytic = tape.backward(&loss)?.collect(&refs);
    let numeric = numerical_gradient(&f, params, h)?;

    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        for (&x, &y) in a.data().iter().zip(n.data()) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    Ok(worst)
}
