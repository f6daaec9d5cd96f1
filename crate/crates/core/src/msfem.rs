//! Multi-scale feature enhancement block.
//!
//! `x → 1×1 reduce → {1×1, 3×3, 5×5} branches → concat[b1, b1+b3, b3+b5]
//! → 1×1 integrate → channel attention`. Branches use same-padding so their
//! outputs can be summed; spatial extent is preserved end to end.

use crate::diffcore::{Bindings, ConvLayer, DenseLayer, ParamDecl, Tape, Var};
use crate::error::{Error, Result};

pub const DEFAULT_REDUCTION: usize = 4;

/// Channel counts of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsfemShape {
    pub c_in: usize,
    pub c_reduced: usize,
    pub c_out: usize,
    pub reduction: usize,
}

impl MsfemShape {
    /// `C_r = max(4, C_in/2)`, `C_out = C_in`, reduction ratio 4.
    pub fn for_channels(c_in: usize) -> Result<Self> {
        Self::new(c_in, (c_in / 2).max(4), c_in, DEFAULT_REDUCTION)
    }

    pub fn new(c_in: usize, c_reduced: usize, c_out: usize, reduction: usize) -> Result<Self> {
        if c_in == 0 || c_reduced == 0 || c_out == 0 || reduction == 0 {
            return Err(Error::Config("msfem channel counts must be positive".into()));
        }
        if c_out % reduction != 0 {
            return Err(Error::Config(format!(
                "channel attention: {c_out} channels not divisible by reduction {reduction}"
            )));
        }
        Ok(Self {
            c_in,
            c_reduced,
            c_out,
            reduction,
        })
    }

    pub fn declare(&self, prefix: &str, decls: &mut Vec<ParamDecl>) {
        let cr = self.c_reduced;
        ConvLayer::declare(&format!("{prefix}.reduce"), self.c_in, cr, 1, decls);
        ConvLayer::declare(&format!("{prefix}.branch1"), cr, cr, 1, decls);
        ConvLayer::declare(&format!("{prefix}.branch3"), cr, cr, 3, decls);
        ConvLayer::declare(&format!("{prefix}.branch5"), cr, cr, 5, decls);
        ConvLayer::declare(&format!("{prefix}.integrate"), 3 * cr, self.c_out, 1, decls);
        let hidden = self.c_out / self.reduction;
        DenseLayer::declare(&format!("{prefix}.attention.squeeze"), self.c_out, hidden, decls);
        DenseLayer::declare(&format!("{prefix}.attention.excite"), hidden, self.c_out, decls);
    }
}

/// Squeeze-excitation weights: `C → C/r → C`.
#[derive(Debug, Clone, Copy)]
pub struct ChannelAttentionParams {
    pub squeeze: DenseLayer,
    pub excite: DenseLayer,
}

#[derive(Debug, Clone, Copy)]
pub struct MsfemParams {
    pub reduce: ConvLayer,
    pub branch1: ConvLayer,
    pub branch3: ConvLayer,
    pub branch5: ConvLayer,
    pub integrate: ConvLayer,
    pub attention: ChannelAttentionParams,
}

impl MsfemParams {
    pub fn bind(b: &Bindings, prefix: &str) -> Result<Self> {
        let conv = |name: &str, pad| ConvLayer::bind(b, &format!("{prefix}.{name}"), (1, 1), pad);
        Ok(Self {
            reduce: conv("reduce", 0)?,
            branch1: conv("branch1", 0)?,
            branch3: conv("branch3", 1)?,
            branch5: conv("branch5", 2)?,
            integrate: conv("integrate", 0)?,
            attention: ChannelAttentionParams {
                squeeze: DenseLayer::bind(b, &format!("{prefix}.attention.squeeze"))?,
                excite: DenseLayer::bind(b, &format!("{prefix}.attention.excite"))?,
            },
        })
    }
}

/// Per-channel gate `sigmoid(excite(relu(squeeze(gap(x)))))`, a `C` vector in (0, 1).
pub fn channel_attention_weights(tape: &mut Tape, x: Var, p: &ChannelAttentionParams) -> Result<Var> {
    let c = *tape
        .dims(x)
        .first()
        .ok_or_else(|| Error::Shape("channel attention on a scalar".into()))?;
    let expected = tape.dims(p.squeeze.weight)[0];
    if c != expected {
        return Err(Error::Shape(format!("channel attention: {c} channels, weights expect {expected}")));
    }
    let hidden = p.squeeze.out_dim(tape);
    if hidden == 0 || c % hidden != 0 {
        return Err(Error::Config(format!(
            "channel attention: {c} channels not divisible into {hidden} hidden units"
        )));
    }
    let pooled = tape.global_average_pool(x)?;
    let h = p.squeeze.forward_vector(tape, pooled)?;
    let h = tape.relu(h);
    let e = p.excite.forward_vector(tape, h)?;
    Ok(tape.sigmoid(e))
}

pub fn channel_attention(tape: &mut Tape, x: Var, p: &ChannelAttentionParams) -> Result<Var> {
    let w = channel_attention_weights(tape, x, p)?;
    tape.scale_channels(x, w)
}

/// The integrate input `concat[b1, b1+b3, b3+b5]`.
pub fn msfem_concat(tape: &mut Tape, x: Var, p: &MsfemParams) -> Result<Var> {
    let r = p.reduce.forward(tape, x)?;
    let b1 = p.branch1.forward(tape, r)?;
    let b3 = p.branch3.forward(tape, r)?;
    let b5 = p.branch5.forward(tape, r)?;
    let s13 = tape.add(b1, b3)?;
    let s35 = tape.add(b3, b5)?;
    tape.concat_channels(&[b1, s13, s35])
}

/// Block output before the channel gate.
pub fn msfem_pre_gate(tape: &mut Tape, x: Var, p: &MsfemParams) -> Result<Var> {
    let cat = msfem_concat(tape, x, p)?;
    p.integrate.forward(tape, cat)
}

pub fn msfem_forward(tape: &mut Tape, x: Var, p: &MsfemParams) -> Result<Var> {
    let pre = msfem_pre_gate(tape, x, p)?;
    channel_attention(tape, pre, &p.attention)
}
