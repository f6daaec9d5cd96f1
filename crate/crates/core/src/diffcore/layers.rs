//! Parameter declarations and the two trainable layer kinds built on the tape.

use rand::Rng;

use super::params::{Bindings, ParamSet};
use super::tape::{Tape, Var};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub dims: Vec<usize>,
    pub fan_in: usize,
}

impl ParamDecl {
    pub fn new(name: impl Into<String>, dims: &[usize], fan_in: usize) -> Self {
        Self {
            name: name.into(),
            dims: dims.to_vec(),
            fan_in,
        }
    }
}

/// Draws every declared tensor, in declaration order, from one generator.
pub fn init_params<R: Rng + ?Sized>(decls: &[ParamDecl], rng: &mut R) -> ParamSet {
    let mut set = ParamSet::new();
    for d in decls {
        set.init_uniform(&d.name, &d.dims, d.fan_in, rng);
    }
    set
}

#[derive(Debug, Clone, Copy)]
pub struct ConvLayer {
    pub weight: Var,
    pub bias: Var,
    pub stride: (usize, usize),
    pub padding: usize,
}

impl ConvLayer {
    pub fn declare(prefix: &str, c_in: usize, c_out: usize, k: usize, decls: &mut Vec<ParamDecl>) {
        let fan_in = c_in * k * k;
        decls.push(ParamDecl::new(format!("{prefix}.weight"), &[c_out, c_in, k, k], fan_in));
        decls.push(ParamDecl::new(format!("{prefix}.bias"), &[c_out], fan_in));
    }

    pub fn bind(b: &Bindings, prefix: &str, stride: (usize, usize), padding: usize) -> Result<Self> {
        Ok(Self {
            weight: b.get(&format!("{prefix}.weight"))?,
            bias: b.get(&format!("{prefix}.bias"))?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.conv2d_strided(x, self.weight, self.bias, self.stride, self.padding)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DenseLayer {
    pub weight: Var,
    pub bias: Var,
}

impl DenseLayer {
    pub fn declare(prefix: &str, d_in: usize, d_out: usize, decls: &mut Vec<ParamDecl>) {
        decls.push(ParamDecl::new(format!("{prefix}.weight"), &[d_in, d_out], d_in));
        decls.push(ParamDecl::new(format!("{prefix}.bias"), &[d_out], d_in));
    }

    pub fn bind(b: &Bindings, prefix: &str) -> Result<Self> {
        Ok(Self {
            weight: b.get(&format!("{prefix}.weight"))?,
            bias: b.get(&format!("{prefix}.bias"))?,
        })
    }

    pub fn out_dim(&self, tape: &Tape) -> usize {
        tape.dims(self.bias)[0]
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.dense(x, self.weight, self.bias)
    }

    /// Applies the layer to a rank-1 input and returns a rank-1 output.
    pub fn forward_vector(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let d = tape.value(x).len();
        let row = tape.reshape(x, &[1, d])?;
        let y = tape.dense(row, self.weight, self.bias)?;
        let k = self.out_dim(tape);
        tape.reshape(y, &[k])
    }
}
