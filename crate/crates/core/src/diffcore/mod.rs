//! Small reverse-mode differentiation core: tensors, a recording tape,
//! named parameter sets and a finite-difference gradient checker.

mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradReport, DEFAULT_EPS, DEFAULT_TOL};
pub use layers::{init_params, ConvLayer, DenseLayer, ParamDecl};
pub use params::{Bindings, ParamSet};
pub use tape::{Activation, Tape, Var};
pub use tensor::Tensor;

