//! Central-difference checks of every differentiable building block, shared
//! by the gradient tests and the acceptance suite.

use msma_core::branch_net::{audio_stem, visual_stem, BranchConfig, Modality, StemParams};
use msma_core::diffcore::{grad_check, init_params, Bindings, DenseLayer, ParamDecl, ParamSet, Tape, Tensor, Var};
use msma_core::fusion::{fuse_bidirectional, regression_head, CrossAttentionParams, HeadParams};
use msma_core::msfem::{channel_attention, msfem_forward, ChannelAttentionParams, MsfemParams, MsfemShape};
use msma_core::trainer::Architecture;
use msma_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Fixed random projection to a scalar so every output coordinate matters.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..tape.value(y).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    tape.weighted_sum(y, w)
}

pub struct Outcome {
    pub what: &'static str,
    pub worst: f64,
    pub pass: bool,
}

fn check<F>(out: &mut Vec<Outcome>, params: &ParamSet, what: &'static str, f: F)
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let report = grad_check(params, EPS, TOL, f).unwrap();
    out.push(Outcome {
        what,
        worst: report.worst(),
        pass: report.pass,
    });
}

fn set(entries: &[(&str, Tensor)]) -> ParamSet {
    let mut p = ParamSet::new();
    for (n, t) in entries {
        p.insert(*n, t.clone());
    }
    p
}

pub fn conv2d_strided_padded(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = set(&[
        ("x", random(&[2, 5, 6], &mut rng)),
        ("w", random(&[3, 2, 3, 3], &mut rng)),
        ("b", random(&[3], &mut rng)),
    ]);
    for (stride, pad) in [((1, 1), 1), ((2, 1), 1), ((2, 2), 0), ((1, 2), 2)] {
        check(out, &p, "conv2d", |t, b| {
            let y = t.conv2d_strided(b.get("x")?, b.get("w")?, b.get("b")?, stride, pad)?;
            project(t, y, 2)
        });
    }
}

pub fn dense_matmul_transpose_add(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = set(&[
        ("x", random(&[3, 4], &mut rng)),
        ("w", random(&[4, 2], &mut rng)),
        ("b", random(&[2], &mut rng)),
        ("m", random(&[3, 2], &mut rng)),
    ]);
    check(out, &p, "dense", |t, b| {
        let y = t.dense(b.get("x")?, b.get("w")?, b.get("b")?)?;
        let y = t.add(y, b.get("m")?)?;
        let yt = t.transpose(y)?;
        let z = t.matmul(yt, b.get("x")?)?;
        project(t, z, 4)
    });
}

pub fn softmax_scale_activations(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = set(&[("a", random(&[3, 5], &mut rng).map(|v| v * 2.0))]);
    check(out, &p, "softmax", |t, b| {
        let s = t.scale(b.get("a")?, 0.7);
        let y = t.softmax_rows(s)?;
        project(t, y, 6)
    });
    check(out, &p, "sigmoid", |t, b| {
        let y = t.sigmoid(b.get("a")?);
        project(t, y, 7)
    });
    // shift away from the kink so finite differences are well defined
    let p = set(&[("a", random(&[3, 5], &mut rng).map(|v| if v.abs() < 0.05 { v + 0.2 } else { v }))]);
    check(out, &p, "relu", |t, b| {
        let y = t.relu(b.get("a")?);
        project(t, y, 8)
    });
}

pub fn pooling_concat_slice_reshape(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = set(&[
        ("a", random(&[2, 3, 4], &mut rng)),
        ("c", random(&[1, 3, 4], &mut rng)),
        ("g", random(&[3], &mut rng)),
        ("r", random(&[4, 3], &mut rng)),
    ]);
    check(out, &p, "gap", |t, b| {
        let y = t.global_average_pool(b.get("a")?)?;
        project(t, y, 10)
    });
    check(out, &p, "concat_channels+slice", |t, b| {
        let cat = t.concat_channels(&[b.get("a")?, b.get("c")?])?;
        let s = t.slice(cat, 1, 2)?;
        let flat = t.reshape(s, &[24])?;
        project(t, flat, 11)
    });
    check(out, &p, "scale_channels", |t, b| {
        let a = b.get("c")?;
        let cat = t.concat_channels(&[b.get("a")?, a])?;
        let y = t.scale_channels(cat, b.get("g")?)?;
        project(t, y, 12)
    });
    check(out, &p, "mean_rows+mean_last_axis+concat", |t, b| {
        let m = t.mean_rows(b.get("r")?)?;
        let l = t.mean_last_axis(b.get("a")?)?;
        let lf = t.reshape(l, &[6])?;
        let j = t.concat(&[m, lf])?;
        project(t, j, 13)
    });
    check(out, &p, "sum", |t, b| {
        let y = t.sigmoid(b.get("r")?);
        Ok(t.sum(y))
    });
}

pub fn mean_abs_error_away_from_kinks(out: &mut Vec<Outcome>) {
    let p = set(&[("p", Tensor::vector(vec![0.6, 0.2, 0.9, 0.4, 0.35]))]);
    let target = [0.5, 0.3, 0.1, 0.45, 0.8];
    check(out, &p, "mae", |t, b| t.mean_abs_error(b.get("p")?, &target));
}

pub fn channel_attention_block(out: &mut Vec<Outcome>) {
    let mut decls = Vec::new();
    decls.push(ParamDecl::new("x", &[8, 3, 3], 1));
    DenseLayer::declare("ca.squeeze", 8, 2, &mut decls);
    DenseLayer::declare("ca.excite", 2, 8, &mut decls);
    let params = init_params(&decls, &mut ChaCha8Rng::seed_from_u64(14));
    check(out, &params, "channel attention", |t, b| {
        let ca = ChannelAttentionParams {
            squeeze: DenseLayer::bind(b, "ca.squeeze")?,
            excite: DenseLayer::bind(b, "ca.excite")?,
        };
        let y = channel_attention(t, b.get("x")?, &ca)?;
        project(t, y, 15)
    });
}

pub fn msfem_block(out: &mut Vec<Outcome>) {
    let mut decls = Vec::new();
    MsfemShape::for_channels(4).unwrap().declare("m", &mut decls);
    decls.push(ParamDecl::new("x", &[4, 5, 5], 1));
    let params = init_params(&decls, &mut ChaCha8Rng::seed_from_u64(16));
    check(out, &params, "msfem", |t, b| {
        let y = msfem_forward(t, b.get("x")?, &MsfemParams::bind(b, "m")?)?;
        project(t, y, 17)
    });
}

pub fn fusion_and_head(out: &mut Vec<Outcome>) {
    let mut decls = Vec::new();
    CrossAttentionParams::declare("v2a", 4, 3, 4, &mut decls);
    CrossAttentionParams::declare("a2v", 4, 3, 4, &mut decls);
    HeadParams::declare("head", 4, &mut decls);
    decls.push(ParamDecl::new("fv", &[2, 4], 1));
    decls.push(ParamDecl::new("fa", &[3, 4], 1));
    let params = init_params(&decls, &mut ChaCha8Rng::seed_from_u64(18));
    check(out, &params, "fusion+head", |t, b| {
        let p1 = CrossAttentionParams::bind(b, t, "v2a")?;
        let p2 = CrossAttentionParams::bind(b, t, "a2v")?;
        let head = HeadParams::bind(b, t, "head")?;
        let pair = fuse_bidirectional(t, b.get("fv")?, b.get("fa")?, &p1, &p2)?;
        let y = regression_head(t, &pair, &head)?;
        project(t, y, 19)
    });
}

fn small_branch(use_msfem: bool) -> BranchConfig {
    BranchConfig {
        visual_channels: vec![4, 4],
        audio_channels: 4,
        audio_stride: 2,
        width: 8,
        use_msfem,
    }
}

pub fn branches_with_and_without_msfem(out: &mut Vec<Outcome>) {
    for use_msfem in [true, false] {
        let cfg = small_branch(use_msfem);
        let mut decls = Vec::new();
        cfg.declare(Modality::Visual, &mut decls).unwrap();
        cfg.declare(Modality::Audio, &mut decls).unwrap();
        decls.push(ParamDecl::new("frames", &[2, 3, 8, 8], 1));
        decls.push(ParamDecl::new("mfcc", &[8, 10], 1));
        let params = init_params(&decls, &mut ChaCha8Rng::seed_from_u64(20));
        check(out, &params, "visual branch", |t, b| {
            let sp = StemParams::bind(b, &cfg, Modality::Visual)?;
            let seq = visual_stem(t, b.get("frames")?, &sp)?;
            project(t, seq.tokens, 21)
        });
        check(out, &params, "audio branch", |t, b| {
            let sp = StemParams::bind(b, &cfg, Modality::Audio)?;
            let seq = audio_stem(t, b.get("mfcc")?, &sp)?;
            project(t, seq.tokens, 22)
        });
    }
}

pub fn end_to_end_micro_network(out: &mut Vec<Outcome>) {
    let arch = Architecture::new(small_branch(true)).unwrap();
    let params = arch.init(23).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let visual = random(&[2, 3, 8, 8], &mut rng).map(|v| 0.5 + 0.5 * v);
    let audio = random(&[8, 10], &mut rng);
    let target = [0.2, 0.7, 0.4, 0.9, 0.1];
    check(out, &params, "network", |t, b| {
        let v = t.constant(visual.clone());
        let a = t.constant(audio.clone());
        let y = arch.forward(t, b, v, a)?;
        t.mean_abs_error(y, &target)
    });
}

pub const ALL: &[fn(&mut Vec<Outcome>)] = &[
    conv2d_strided_padded,
    dense_matmul_transpose_add,
    softmax_scale_activations,
    pooling_concat_slice_reshape,
    mean_abs_error_away_from_kinks,
    channel_attention_block,
    msfem_block,
    fusion_and_head,
    branches_with_and_without_msfem,
    end_to_end_micro_network,
];
