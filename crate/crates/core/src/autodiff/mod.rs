//! Reverse-mode automatic differentiation over dense `f64` matrices.

mod adam;
mod dropout;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use dropout::{dropout, Mode};
pub use gradcheck::grad_check;
pub use params::{Param, ParamId, ParamStore};
pub use tape::{segment_softmax, Segments, Tape, Var};
pub use tensor::{gemm, matmul, Tensor, Trans};

