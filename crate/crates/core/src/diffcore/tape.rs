//! Reverse-mode tape.
//!
//! Every operation appends a node holding its forward value and enough
//! bookkeeping to push an upstream gradient back to its inputs. Gradients
//! are summed when a node feeds several consumers.

use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: usize,
        kernels: usize,
        bias: usize,
        geom: ConvGeom,
        patches: Patches,
    },
    Dense {
        x: usize,
        w: usize,
        b: usize,
    },
    MatMul {
        a: usize,
        b: usize,
    },
    Transpose {
        a: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        factor: f64,
    },
    SoftmaxRows {
        a: usize,
    },
    Activation {
        a: usize,
        kind: Activation,
    },
    GlobalAvgPool {
        a: usize,
    },
    Concat {
        parts: Vec<usize>,
    },
    Slice {
        a: usize,
        offset: usize,
    },
    ScaleChannels {
        x: usize,
        w: usize,
    },
    MeanRows {
        a: usize,
    },
    MeanLastAxis {
        a: usize,
    },
    Reshape {
        a: usize,
    },
    Sum {
        a: usize,
    },
    WeightedSum {
        a: usize,
        weights: Vec<f64>,
    },
    MeanAbsError {
        pred: usize,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    tensor: Tensor,
    op: Op,
    tracked: bool,
}

/// A single computation graph. Not shared across threads while recording.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients are kept only if the tensor requires them.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let tracked = tensor.requires_grad();
        self.push(tensor, Op::Leaf, tracked)
    }

    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].tensor.dims()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].tensor.grad()
    }

    fn push(&mut self, tensor: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { tensor, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&i| self.nodes[i].tracked)
    }

    fn vals(&self, v: Var) -> &[f64] {
        self.nodes[v.0].tensor.values()
    }

    fn derived(&mut self, dims: Vec<usize>, values: Vec<f64>, op: Op, inputs: &[usize]) -> Var {
        let tracked = self.tracked(inputs);
        let tensor = Tensor::new(dims, values).expect("op produced inconsistent dims");
        self.push(tensor, op, tracked)
    }

    /// 2-D cross-correlation of a `C_in×H×W` map with `C_out×C_in×k×k` kernels.
    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        self.conv2d_strided(input, kernels, bias, (stride, stride), padding)
    }

    /// Like [`Tape::conv2d`] but with independent row/column strides.
    pub fn conv2d_strided(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Var,
        stride: (usize, usize),
        padding: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::new(self.dims(input), self.dims(kernels), self.dims(bias), stride, padding)?;
        let patches = geom.patches(self.vals(input));
        let out = geom.forward(&patches, self.vals(kernels), self.vals(bias));
        Ok(self.derived(
            vec![geom.c_out, geom.oh, geom.ow],
            out,
            Op::Conv2d {
                input: input.0,
                kernels: kernels.0,
                bias: bias.0,
                geom,
                patches,
            },
            &[input.0, kernels.0, bias.0],
        ))
    }

    /// `x·W + b` with `b` broadcast over rows.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, d) = as_matrix(self.dims(x), "dense input")?;
        let (d2, k) = as_matrix(self.dims(w), "dense weight")?;
        if d != d2 {
            return shape_err(format!("dense: input width {d} vs weight rows {d2}"));
        }
        if self.dims(b) != [k] {
            return shape_err(format!("dense: bias {:?} vs {k} outputs", self.dims(b)));
        }
        let mut out = matmul(self.vals(x), self.vals(w), n, d, k);
        let bias = self.vals(b);
        for row in out.chunks_mut(k) {
            for (o, &bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        Ok(self.derived(vec![n, k], out, Op::Dense { x: x.0, w: w.0, b: b.0 }, &[x.0, w.0, b.0]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = as_matrix(self.dims(a), "matmul lhs")?;
        let (m2, p) = as_matrix(self.dims(b), "matmul rhs")?;
        if m != m2 {
            return shape_err(format!("matmul: inner dims {m} vs {m2}"));
        }
        let out = matmul(self.vals(a), self.vals(b), n, m, p);
        Ok(self.derived(vec![n, p], out, Op::MatMul { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (n, m) = as_matrix(self.dims(a), "transpose")?;
        let out = transpose(self.vals(a), n, m);
        Ok(self.derived(vec![m, n], out, Op::Transpose { a: a.0 }, &[a.0]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return shape_err(format!("add: {:?} vs {:?}", self.dims(a), self.dims(b)));
        }
        let out = self.vals(a).iter().zip(self.vals(b)).map(|(x, y)| x + y).collect();
        let dims = self.dims(a).to_vec();
        Ok(self.derived(dims, out, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.vals(a).iter().map(|x| x * factor).collect();
        let dims = self.dims(a).to_vec();
        self.derived(dims, out, Op::Scale { a: a.0, factor }, &[a.0])
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (_, m) = as_matrix(self.dims(a), "softmax_rows")?;
        let mut out = self.vals(a).to_vec();
        for row in out.chunks_mut(m) {
            softmax_in_place(row);
        }
        let dims = self.dims(a).to_vec();
        Ok(self.derived(dims, out, Op::SoftmaxRows { a: a.0 }, &[a.0]))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let out = match kind {
            Activation::Relu => self.vals(a).iter().map(|&x| x.max(0.0)).collect(),
            Activation::Sigmoid => self.vals(a).iter().map(|&x| sigmoid(x)).collect(),
        };
        let dims = self.dims(a).to_vec();
        self.derived(dims, out, Op::Activation { a: a.0, kind }, &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    /// Mean over the spatial positions of a `C×H×W` map, giving a `C` vector.
    pub fn global_average_pool(&mut self, a: Var) -> Result<Var> {
        let dims = self.dims(a);
        if dims.len() != 3 {
            return shape_err(format!("global_average_pool expects C×H×W, got {dims:?}"));
        }
        let (c, hw) = (dims[0], dims[1] * dims[2]);
        let out = self
            .vals(a)
            .chunks(hw)
            .map(|ch| ch.iter().sum::<f64>() / hw as f64)
            .collect();
        Ok(self.derived(vec![c], out, Op::GlobalAvgPool { a: a.0 }, &[a.0]))
    }

    /// Stacks tensors along their leading axis (channels for feature maps).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return shape_err("concat of zero parts");
        };
        let tail = self.dims(*first).get(1..).unwrap_or(&[]).to_vec();
        if self.dims(*first).is_empty() {
            return shape_err("concat needs rank ≥ 1");
        }
        let mut lead = 0;
        let mut out = Vec::new();
        for &p in parts {
            let d = self.dims(p);
            if d.is_empty() || d[1..] != tail[..] {
                return shape_err(format!("concat: part {d:?} incompatible with trailing {tail:?}"));
            }
            lead += d[0];
            out.extend_from_slice(self.vals(p));
        }
        let mut dims = vec![lead];
        dims.extend(tail);
        let idx: Vec<usize> = parts.iter().map(|v| v.0).collect();
        Ok(self.derived(dims, out, Op::Concat { parts: idx.clone() }, &idx))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            if self.dims(p).len() != 3 {
                return shape_err(format!("concat_channels expects C×H×W maps, got {:?}", self.dims(p)));
            }
        }
        self.concat(parts)
    }

    /// Rows `start..start+len` of the leading axis.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let dims = self.dims(a).to_vec();
        if dims.is_empty() || len == 0 || start + len > dims[0] {
            return shape_err(format!("slice {start}..{} out of {dims:?}", start + len));
        }
        let stride: usize = dims[1..].iter().product();
        let out = self.vals(a)[start * stride..(start + len) * stride].to_vec();
        let mut out_dims = dims;
        out_dims[0] = len;
        Ok(self.derived(
            out_dims,
            out,
            Op::Slice {
                a: a.0,
                offset: start * stride,
            },
            &[a.0],
        ))
    }

    /// Multiplies channel `c` of `x` by `w[c]`.
    pub fn scale_channels(&mut self, x: Var, w: Var) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if dims.len() < 2 || self.dims(w) != [dims[0]] {
            return shape_err(format!("scale_channels: {:?} by {:?}", dims, self.dims(w)));
        }
        let stride: usize = dims[1..].iter().product();
        let wv = self.vals(w);
        let out = self
            .vals(x)
            .chunks(stride)
            .zip(wv)
            .flat_map(|(ch, &s)| ch.iter().map(move |v| v * s))
            .collect();
        Ok(self.derived(dims, out, Op::ScaleChannels { x: x.0, w: w.0 }, &[x.0, w.0]))
    }

    /// Column means of an `n×d` matrix.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (n, d) = as_matrix(self.dims(a), "mean_rows")?;
        let mut out = vec![0.0; d];
        for row in self.vals(a).chunks(d) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        Ok(self.derived(vec![d], out, Op::MeanRows { a: a.0 }, &[a.0]))
    }

    /// Mean over the last axis, dropping it.
    pub fn mean_last_axis(&mut self, a: Var) -> Result<Var> {
        let dims = self.dims(a).to_vec();
        if dims.len() < 2 {
            return shape_err(format!("mean_last_axis needs rank ≥ 2, got {dims:?}"));
        }
        let l = *dims.last().unwrap();
        let out = self.vals(a).chunks(l).map(|c| c.iter().sum::<f64>() / l as f64).collect();
        Ok(self.derived(dims[..dims.len() - 1].to_vec(), out, Op::MeanLastAxis { a: a.0 }, &[a.0]))
    }

    pub fn reshape(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let n: usize = dims.iter().product();
        if n != self.value(a).len() || dims.contains(&0) {
            return shape_err(format!("reshape {:?} into {dims:?}", self.dims(a)));
        }
        let out = self.vals(a).to_vec();
        Ok(self.derived(dims.to_vec(), out, Op::Reshape { a: a.0 }, &[a.0]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.vals(a).iter().sum();
        self.derived(Vec::new(), vec![s], Op::Sum { a: a.0 }, &[a.0])
    }

    /// `Σ a_i · weights_i` for constant weights.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<f64>) -> Result<Var> {
        if weights.len() != self.value(a).len() {
            return shape_err(format!(
                "weighted_sum: {} weights for {} values",
                weights.len(),
                self.value(a).len()
            ));
        }
        let s = self.vals(a).iter().zip(&weights).map(|(x, w)| x * w).sum();
        Ok(self.derived(Vec::new(), vec![s], Op::WeightedSum { a: a.0, weights }, &[a.0]))
    }

    /// Mean of `|pred − target|` over all entries. Subgradient 0 at ties.
    pub fn mean_abs_error(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        if target.len() != self.value(pred).len() {
            return shape_err(format!(
                "mean_abs_error: {} targets for {} predictions",
                target.len(),
                self.value(pred).len()
            ));
        }
        let n = target.len() as f64;
        let s = self.vals(pred).iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
        Ok(self.derived(
            Vec::new(),
            vec![s],
            Op::MeanAbsError {
                pred: pred.0,
                target: target.to_vec(),
            },
            &[pred.0],
        ))
    }

    /// Back-propagates from a scalar node; gradients land on every tracked node.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return shape_err(format!("backward from non-scalar {:?}", self.dims(root)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            self.nodes[i].tensor.set_grad(g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.tensor.values();
        let wants = |j: usize| self.nodes[j].tracked;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernels,
                bias,
                geom,
                patches,
            } => {
                let w = self.nodes[*kernels].tensor.values();
                if wants(*input) {
                    accumulate(grads, *input, geom.backward_input(patches, w, g));
                }
                if wants(*kernels) {
                    accumulate(grads, *kernels, geom.backward_kernels(patches, g));
                }
                if wants(*bias) {
                    accumulate(grads, *bias, geom.backward_bias(g));
                }
            }
            Op::Dense { x, w, b } => {
                let (n, d) = matrix_dims(&self.nodes[*x].tensor);
                let k = self.nodes[*w].tensor.dims()[1];
                if wants(*x) {
                    let wt = transpose(self.nodes[*w].tensor.values(), d, k);
                    accumulate(grads, *x, matmul(g, &wt, n, k, d));
                }
                if wants(*w) {
                    let xt = transpose(self.nodes[*x].tensor.values(), n, d);
                    accumulate(grads, *w, matmul(&xt, g, d, n, k));
                }
                if wants(*b) {
                    let mut gb = vec![0.0; k];
                    for row in g.chunks(k) {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::MatMul { a, b } => {
                let (n, m) = matrix_dims(&self.nodes[*a].tensor);
                let p = self.nodes[*b].tensor.dims()[1];
                if wants(*a) {
                    let bt = transpose(self.nodes[*b].tensor.values(), m, p);
                    accumulate(grads, *a, matmul(g, &bt, n, p, m));
                }
                if wants(*b) {
                    let at = transpose(self.nodes[*a].tensor.values(), n, m);
                    accumulate(grads, *b, matmul(&at, g, m, n, p));
                }
            }
            Op::Transpose { a } => {
                let (n, m) = matrix_dims(&self.nodes[*a].tensor);
                accumulate(grads, *a, transpose(g, m, n));
            }
            Op::Add { a, b } => {
                if wants(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Op::Scale { a, factor } => {
                accumulate(grads, *a, g.iter().map(|v| v * factor).collect());
            }
            Op::SoftmaxRows { a } => {
                let m = node.tensor.dims()[1];
                let mut ga = Vec::with_capacity(g.len());
                for (yr, gr) in out.chunks(m).zip(g.chunks(m)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, gv)| y * gv).sum();
                    ga.extend(yr.iter().zip(gr).map(|(y, gv)| y * (gv - dot)));
                }
                accumulate(grads, *a, ga);
            }
            Op::Activation { a, kind } => {
                let ga = match kind {
                    Activation::Relu => out
                        .iter()
                        .zip(g)
                        .map(|(&y, &gv)| if y > 0.0 { gv } else { 0.0 })
                        .collect(),
                    Activation::Sigmoid => out.iter().zip(g).map(|(&y, &gv)| gv * y * (1.0 - y)).collect(),
                };
                accumulate(grads, *a, ga);
            }
            Op::GlobalAvgPool { a } => {
                let dims = self.nodes[*a].tensor.dims();
                let hw = dims[1] * dims[2];
                let ga = g
                    .iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv / hw as f64, hw))
                    .collect();
                accumulate(grads, *a, ga);
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p].tensor.len();
                    if wants(p) {
                        accumulate(grads, p, g[offset..offset + n].to_vec());
                    }
                    offset += n;
                }
            }
            Op::Slice { a, offset } => {
                let mut ga = vec![0.0; self.nodes[*a].tensor.len()];
                ga[*offset..*offset + g.len()].copy_from_slice(g);
                accumulate(grads, *a, ga);
            }
            Op::ScaleChannels { x, w } => {
                let stride = g.len() / self.nodes[*w].tensor.len();
                if wants(*x) {
                    let wv = self.nodes[*w].tensor.values();
                    let gx = g
                        .chunks(stride)
                        .zip(wv)
                        .flat_map(|(ch, &s)| ch.iter().map(move |v| v * s))
                        .collect();
                    accumulate(grads, *x, gx);
                }
                if wants(*w) {
                    let xv = self.nodes[*x].tensor.values();
                    let gw = g
                        .chunks(stride)
                        .zip(xv.chunks(stride))
                        .map(|(gc, xc)| gc.iter().zip(xc).map(|(a, b)| a * b).sum())
                        .collect();
                    accumulate(grads, *w, gw);
                }
            }
            Op::MeanRows { a } => {
                let (n, _) = matrix_dims(&self.nodes[*a].tensor);
                let ga = (0..n).flat_map(|_| g.iter().map(move |v| v / n as f64)).collect();
                accumulate(grads, *a, ga);
            }
            Op::MeanLastAxis { a } => {
                let l = *self.nodes[*a].tensor.dims().last().unwrap();
                let ga = g
                    .iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv / l as f64, l))
                    .collect();
                accumulate(grads, *a, ga);
            }
            Op::Reshape { a } => accumulate(grads, *a, g.to_vec()),
            Op::Sum { a } => {
                let n = self.nodes[*a].tensor.len();
                accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::WeightedSum { a, weights } => {
                accumulate(grads, *a, weights.iter().map(|w| w * g[0]).collect());
            }
            Op::MeanAbsError { pred, target } => {
                let p = self.nodes[*pred].tensor.values();
                let n = target.len() as f64;
                let ga = p
                    .iter()
                    .zip(target)
                    .map(|(&pv, &t)| {
                        let s = if pv > t {
                            1.0
                        } else if pv < t {
                            -1.0
                        } else {
                            0.0
                        };
                        g[0] * s / n
                    })
                    .collect();
                accumulate(grads, *pred, ga);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, delta: Vec<f64>) {
    match &mut grads[idx] {
        Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(delta),
    }
}

fn as_matrix(dims: &[usize], what: &str) -> Result<(usize, usize)> {
    match dims {
        [n, m] => Ok((*n, *m)),
        _ => Err(Error::Shape(format!("{what}: expected a matrix, got {dims:?}"))),
    }
}

fn matrix_dims(t: &Tensor) -> (usize, usize) {
    (t.dims()[0], t.dims()[1])
}

/// Row-major `n×m` times `m×p`.
pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize, m: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        let orow = &mut out[i * p..(i + 1) * p];
        for k in 0..m {
            let av = a[i * m + k];
            if av == 0.0 {
                continue;
            }
            let brow = &b[k * p..(k + 1) * p];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a[i * m + j];
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

const PADDING: u32 = u32::MAX;

/// Unfolded convolution input kept on the tape for the backward pass.
#[derive(Debug, Clone)]
struct Patches {
    taps: Vec<u32>,
    cols: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(x: &[usize], k: &[usize], b: &[usize], stride: (usize, usize), pad: usize) -> Result<Self> {
        let [c_in, h, w] = x else {
            return shape_err(format!("conv2d input must be C×H×W, got {x:?}"));
        };
        let [c_out, kc, kh, kw] = k else {
            return shape_err(format!("conv2d kernels must be C_out×C_in×k×k, got {k:?}"));
        };
        if kc != c_in {
            return shape_err(format!("conv2d: input has {c_in} channels, kernels expect {kc}"));
        }
        if b != [*c_out] {
            return shape_err(format!("conv2d: bias {b:?} for {c_out} output channels"));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return shape_err("conv2d: stride must be positive");
        }
        if c_in * h * w >= PADDING as usize {
            return shape_err(format!("conv2d: input {x:?} is too large to index"));
        }
        if *kh > h + 2 * pad || *kw > w + 2 * pad {
            return shape_err(format!("conv2d: kernel {kh}×{kw} larger than padded input {h}×{w} (pad {pad})"));
        }
        Ok(Self {
            c_in: *c_in,
            h: *h,
            w: *w,
            c_out: *c_out,
            kh: *kh,
            kw: *kw,
            sh: stride.0,
            sw: stride.1,
            pad,
            oh: (h + 2 * pad - kh) / stride.0 + 1,
            ow: (w + 2 * pad - kw) / stride.1 + 1,
        })
    }

    /// Output positions `o` with `0 ≤ o·s + k − pad < len`.
    fn valid(k: usize, pad: usize, s: usize, len: usize, out_len: usize) -> (usize, usize) {
        let lo = if k >= pad { 0 } else { (pad - k).div_ceil(s) };
        let hi = if len + pad > k { ((len - 1 + pad - k) / s + 1).min(out_len) } else { 0 };
        (lo, hi.max(lo))
    }

    /// Unfolds `x` into one row per tap `r = (ci, ki, kj)` over output positions,
    /// remembering which input element each entry came from.
    fn patches(&self, x: &[f64]) -> Patches {
        let len = self.c_in * self.kh * self.kw * self.oh * self.ow;
        let mut taps = vec![PADDING; len];
        let mut cols = vec![0.0; len];
        let mut at = 0;
        for ci in 0..self.c_in {
            for ki in 0..self.kh {
                let (ylo, yhi) = Self::valid(ki, self.pad, self.sh, self.h, self.oh);
                for kj in 0..self.kw {
                    let (xlo, xhi) = Self::valid(kj, self.pad, self.sw, self.w, self.ow);
                    for oy in ylo..yhi {
                        let row = (ci * self.h + oy * self.sh + ki - self.pad) * self.w;
                        for ox in xlo..xhi {
                            let i = row + ox * self.sw + kj - self.pad;
                            taps[at + oy * self.ow + ox] = i as u32;
                            cols[at + oy * self.ow + ox] = x[i];
                        }
                    }
                    at += self.oh * self.ow;
                }
            }
        }
        Patches { taps, cols }
    }

    fn forward(&self, p: &Patches, kern: &[f64], bias: &[f64]) -> Vec<f64> {
        let plane = self.oh * self.ow;
        let taps_per_out = p.cols.len() / plane;
        let mut out = vec![0.0; self.c_out * plane];
        for ((ob, wrow), &b) in out.chunks_mut(plane).zip(kern.chunks(taps_per_out)).zip(bias) {
            ob.fill(b);
            axpy_rows(ob, wrow, &p.cols);
        }
        out
    }

    fn backward_input(&self, p: &Patches, kern: &[f64], g: &[f64]) -> Vec<f64> {
        let plane = self.oh * self.ow;
        let rows = p.taps.len() / plane;
        // column gradients first, then one scatter into the input
        let mut gcols = vec![0.0; p.taps.len()];
        for (r, gc) in gcols.chunks_mut(plane).enumerate() {
            let w: Vec<f64> = (0..self.c_out).map(|co| kern[co * rows + r]).collect();
            axpy_rows(gc, &w, g);
        }
        let mut gx = vec![0.0; self.c_in * self.h * self.w];
        for (&t, &v) in p.taps.iter().zip(&gcols) {
            if t != PADDING {
                gx[t as usize] += v;
            }
        }
        gx
    }

    fn backward_kernels(&self, p: &Patches, g: &[f64]) -> Vec<f64> {
        let plane = self.oh * self.ow;
        let mut gk = Vec::with_capacity(self.c_out * p.cols.len() / plane);
        for gb in g.chunks(plane) {
            // four independent left-to-right sums at a time
            let mut quads = p.cols.chunks_exact(4 * plane);
            for q in &mut quads {
                let (c0, rest) = q.split_at(plane);
                let (c1, rest) = rest.split_at(plane);
                let (c2, c3) = rest.split_at(plane);
                let mut acc = [0.0; 4];
                for i in 0..plane {
                    acc[0] += gb[i] * c0[i];
                    acc[1] += gb[i] * c1[i];
                    acc[2] += gb[i] * c2[i];
                    acc[3] += gb[i] * c3[i];
                }
                gk.extend_from_slice(&acc);
            }
            for col in quads.remainder().chunks(plane) {
                gk.push(gb.iter().zip(col).fold(0.0, |acc, (a, b)| acc + a * b));
            }
        }
        gk
    }

    fn backward_bias(&self, g: &[f64]) -> Vec<f64> {
        g.chunks(self.oh * self.ow).map(|c| c.iter().sum()).collect()
    }
}

/// `out += Σ_r w[r]·rows[r]`, accumulated left to right in `r` per element.
fn axpy_rows(out: &mut [f64], w: &[f64], rows: &[f64]) {
    let n = out.len();
    let mut blocks = w.chunks_exact(4).zip(rows.chunks_exact(4 * n));
    for (wq, q) in &mut blocks {
        let (r0, rest) = q.split_at(n);
        let (r1, rest) = rest.split_at(n);
        let (r2, r3) = rest.split_at(n);
        for i in 0..n {
            out[i] = out[i] + wq[0] * r0[i] + wq[1] * r1[i] + wq[2] * r2[i] + wq[3] * r3[i];
        }
    }
    let done = w.len() / 4 * 4;
    for (&wv, row) in w[done..].iter().zip(rows[done * n..].chunks(n)) {
        for (o, &c) in out.iter_mut().zip(row) {
            *o += wv * c;
        }
    }
}
