//! Central-difference gradient checking over a parameter store.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Max over every parameter entry of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
///
/// `f` builds a scalar on a fresh tape from the store; it must be
/// deterministic (no dropout).
pub fn grad_check<F>(store: &ParamStore, fd_step: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, &work)?;
    tape.backward(loss)?;
    tape.accumulate_param_grads(&mut work);
    let analytic: Vec<Vec<f64>> = work.iter().map(|p| p.grad.data().to_vec()).collect();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let v = f(&mut tape, s)?;
        Ok(tape.value(v).item())
    };

    let mut worst: f64 = 0.0;
    let ids: Vec<_> = work.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for k in 0..work.value(id).len() {
            let orig = work.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = orig + fd_step;
            let up = eval(&work)?;
            work.value_mut(id).data_mut()[k] = orig - fd_step;
            let down = eval(&work)?;
            work.value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * fd_step);
            let a = analytic[pi][k];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
