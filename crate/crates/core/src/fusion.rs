//! Bidirectional cross-attention fusion and the Big Five regression head.
//!
//! `F_fusion1 = softmax(F_v W_q (F_a W_k)ᵀ / √d_k) F_a W_v` (visual queries),
//! `F_fusion2` is the same with the modalities swapped and its own weights.

use crate::diffcore::{Bindings, DenseLayer, ParamDecl, Tape, Var};
use crate::error::{Error, Result};

pub const TRAIT_COUNT: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct CrossAttentionParams {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub d_k: usize,
}

impl CrossAttentionParams {
    pub fn declare(prefix: &str, d: usize, d_k: usize, d_v: usize, decls: &mut Vec<ParamDecl>) {
        decls.push(ParamDecl::new(format!("{prefix}.wq"), &[d, d_k], d));
        decls.push(ParamDecl::new(format!("{prefix}.wk"), &[d, d_k], d));
        decls.push(ParamDecl::new(format!("{prefix}.wv"), &[d, d_v], d));
    }

    pub fn bind(b: &Bindings, tape: &Tape, prefix: &str) -> Result<Self> {
        Self::from_vars(
            tape,
            b.get(&format!("{prefix}.wq"))?,
            b.get(&format!("{prefix}.wk"))?,
            b.get(&format!("{prefix}.wv"))?,
        )
    }

    /// Validates that `W_q` and `W_k` share `d_k` columns and all three share `d` rows.
    pub fn from_vars(tape: &Tape, wq: Var, wk: Var, wv: Var) -> Result<Self> {
        let (q, k, v) = (tape.dims(wq), tape.dims(wk), tape.dims(wv));
        if q.len() != 2 || k.len() != 2 || v.len() != 2 {
            return Err(Error::Shape("attention weights must be matrices".into()));
        }
        if q[1] != k[1] {
            return Err(Error::Shape(format!("W_q has {} columns, W_k has {}", q[1], k[1])));
        }
        if q[0] != k[0] || q[0] != v[0] {
            return Err(Error::Shape(format!(
                "attention weights disagree on input width: {} / {} / {}",
                q[0], k[0], v[0]
            )));
        }
        Ok(Self { wq, wk, wv, d_k: q[1] })
    }
}

/// Returns `(output, attention weights)`; weights are `n×m`, rows summing to 1.
pub fn cross_attention_with_weights(
    tape: &mut Tape,
    fq: Var,
    fkv: Var,
    p: &CrossAttentionParams,
) -> Result<(Var, Var)> {
    let d = tape.dims(p.wq)[0];
    for (what, v) in [("query", fq), ("key/value", fkv)] {
        match tape.dims(v) {
            [n, w] if *n >= 1 && *w == d => {}
            other => {
                return Err(Error::Shape(format!(
                    "{what} sequence {other:?} does not match attention width {d}"
                )))
            }
        }
    }
    let q = tape.matmul(fq, p.wq)?;
    let k = tape.matmul(fkv, p.wk)?;
    let v = tape.matmul(fkv, p.wv)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (p.d_k as f64).sqrt());
    let weights = tape.softmax_rows(scaled)?;
    let out = tape.matmul(weights, v)?;
    Ok((out, weights))
}

pub fn cross_attention(tape: &mut Tape, fq: Var, fkv: Var, p: &CrossAttentionParams) -> Result<Var> {
    Ok(cross_attention_with_weights(tape, fq, fkv, p)?.0)
}

/// `f1`: visual queries over audio keys/values; `f2`: the reverse.
#[derive(Debug, Clone, Copy)]
pub struct FusedPair {
    pub f1: Var,
    pub f2: Var,
}

pub fn fuse_bidirectional(
    tape: &mut Tape,
    f_v: Var,
    f_a: Var,
    p1: &CrossAttentionParams,
    p2: &CrossAttentionParams,
) -> Result<FusedPair> {
    if tape.dims(f_v).get(1) != tape.dims(f_a).get(1) {
        return Err(Error::Shape(format!(
            "token widths differ: {:?} vs {:?}",
            tape.dims(f_v),
            tape.dims(f_a)
        )));
    }
    let f1 = cross_attention(tape, f_v, f_a, p1)?;
    let f2 = cross_attention(tape, f_a, f_v, p2)?;
    Ok(FusedPair { f1, f2 })
}

/// Dense map from the pooled fused pair (`2·d_v`) to the five traits.
#[derive(Debug, Clone, Copy)]
pub struct HeadParams {
    pub dense: DenseLayer,
}

impl HeadParams {
    pub fn declare(prefix: &str, d_v: usize, decls: &mut Vec<ParamDecl>) {
        DenseLayer::declare(prefix, 2 * d_v, TRAIT_COUNT, decls);
    }

    pub fn bind(b: &Bindings, tape: &Tape, prefix: &str) -> Result<Self> {
        let dense = DenseLayer::bind(b, prefix)?;
        if dense.out_dim(tape) != TRAIT_COUNT {
            return Err(Error::Shape(format!(
                "regression head has {} outputs, expected {TRAIT_COUNT}",
                dense.out_dim(tape)
            )));
        }
        Ok(Self { dense })
    }
}

/// Mean-pools both halves over tokens, concatenates, projects and squashes.
pub fn regression_head(tape: &mut Tape, pair: &FusedPair, head: &HeadParams) -> Result<Var> {
    let p1 = tape.mean_rows(pair.f1)?;
    let p2 = tape.mean_rows(pair.f2)?;
    let joined = tape.concat(&[p1, p2])?;
    let logits = head.dense.forward_vector(tape, joined)?;
    Ok(tape.sigmoid(logits))
}
