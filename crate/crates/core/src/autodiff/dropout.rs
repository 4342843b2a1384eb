use std::sync::Arc;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: in training, zero each entry with probability `p` and
/// scale survivors by `1/(1-p)`. Identity in eval mode or when `p == 0`.
pub fn dropout(tape: &mut Tape, x: Var, p: f64, mode: Mode, rng: &mut RngStream) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} not in [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x);
    }
    let (r, c) = tape.shape(x);
    let keep = 1.0 / (1.0 - p);
    let mask: Arc<[f64]> = (0..r * c)
        .map(|_| if rng.bernoulli(p) { 0.0 } else { keep })
        .collect();
    tape.mask(x, mask)
}
