use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::branch_net::{audio_stem, visual_stem, BranchConfig, Modality, StemParams};
use crate::datastore::round_to_f32;
use crate::diffcore::{init_params, Bindings, ParamDecl, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::fusion::{fuse_bidirectional, regression_head, CrossAttentionParams, HeadParams};
use crate::mas::Sample;
use crate::metrics::Predictor;
use crate::scores::BigFiveScores;

pub const FUSION_V2A: &str = "fusion.v2a";
pub const FUSION_A2V: &str = "fusion.a2v";
pub const HEAD: &str = "head";

/// Full model layout: both stems, the two attention blocks and the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub branch: BranchConfig,
}

impl Architecture {
    pub fn new(branch: BranchConfig) -> Result<Self> {
        branch.validate()?;
        Ok(Self { branch })
    }

    pub fn declarations(&self) -> Result<Vec<ParamDecl>> {
        let d = self.branch.width;
        let mut decls = Vec::new();
        self.branch.declare(Modality::Visual, &mut decls)?;
        self.branch.declare(Modality::Audio, &mut decls)?;
        CrossAttentionParams::declare(FUSION_V2A, d, d, d, &mut decls);
        CrossAttentionParams::declare(FUSION_A2V, d, d, d, &mut decls);
        HeadParams::declare(HEAD, d, &mut decls);
        Ok(decls)
    }

    /// Seeded initialization, rounded to 32-bit precision.
    pub fn init(&self, seed: u64) -> Result<ParamSet> {
        let mut params = init_params(&self.declarations()?, &mut ChaCha8Rng::seed_from_u64(seed));
        for (_, t) in params.iter_mut() {
            *t = round_to_f32(t);
        }
        Ok(params)
    }

    /// Checks that `params` holds exactly the declared names and shapes.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let decls = self.declarations()?;
        if decls.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                decls.len(),
                params.len()
            )));
        }
        for d in &decls {
            match params.get(&d.name) {
                Some(t) if t.dims() == d.dims.as_slice() => {}
                Some(t) => {
                    return Err(Error::Config(format!(
                        "parameter {} has dims {:?}, expected {:?}",
                        d.name,
                        t.dims(),
                        d.dims
                    )))
                }
                None => return Err(Error::Config(format!("missing parameter `{}`", d.name))),
            }
        }
        Ok(())
    }

    /// Five sigmoid outputs for one `K×3×H×W` / `T×10` input pair.
    pub fn forward(&self, tape: &mut Tape, b: &Bindings, visual: Var, audio: Var) -> Result<Var> {
        let vp = StemParams::bind(b, &self.branch, Modality::Visual)?;
        let ap = StemParams::bind(b, &self.branch, Modality::Audio)?;
        let v2a = CrossAttentionParams::bind(b, tape, FUSION_V2A)?;
        let a2v = CrossAttentionParams::bind(b, tape, FUSION_A2V)?;
        let head = HeadParams::bind(b, tape, HEAD)?;
        let fv = visual_stem(tape, visual, &vp)?;
        let fa = audio_stem(tape, audio, &ap)?;
        let pair = fuse_bidirectional(tape, fv.tokens, fa.tokens, &v2a, &a2v)?;
        regression_head(tape, &pair, &head)
    }

    /// Records `sample` on a fresh tape with tracked parameters.
    pub fn record(&self, params: &ParamSet, sample: &Sample) -> Result<(Tape, Bindings, Var)> {
        let mut tape = Tape::new();
        let b = params.bind(&mut tape);
        let v = tape.constant(sample.visual.clone());
        let a = tape.constant(sample.audio.clone());
        let out = self.forward(&mut tape, &b, v, a)?;
        Ok((tape, b, out))
    }
}

/// Architecture, trained parameters and the fixed input standardization.
///
/// Callers pass raw features; standardization happens inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: ParamSet,
    pub norm: FeatureNorm,
}

impl Model {
    pub fn new(arch: Architecture, params: ParamSet, norm: FeatureNorm) -> Result<Self> {
        arch.check_params(&params)?;
        Ok(Self { arch, params, norm })
    }

    pub fn predict_values(&self, sample: &Sample) -> Result<[f64; 5]> {
        let (tape, _, out) = self.arch.record(&self.params, &self.norm.apply(sample)?)?;
        let v = tape.value(out).values();
        Ok([v[0], v[1], v[2], v[3], v[4]])
    }
}

impl Predictor for Model {
    fn predict(&self, sample: &Sample) -> Result<BigFiveScores> {
        BigFiveScores::new(self.predict_values(sample)?)
    }
}

/// Per-channel standardization of both modalities, fitted on training features.
///
/// Audio is standardized per MFCC coefficient, video per colour channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNorm {
    pub audio_mean: Tensor,
    pub audio_std: Tensor,
    pub visual_mean: Tensor,
    pub visual_std: Tensor,
}

/// Mean and population std of each channel; `channel(i)` maps a flat index to its channel.
/// Channels with std below `1e-6` keep scale 1. Results are rounded to 32-bit precision.
fn channel_stats<'a>(
    channels: usize,
    data: impl Iterator<Item = &'a Tensor>,
    channel: impl Fn(&[usize], usize) -> usize,
) -> (Tensor, Tensor) {
    let mut sum = vec![0.0; channels];
    let mut sq = vec![0.0; channels];
    let mut count = vec![0usize; channels];
    for t in data {
        for (i, &v) in t.values().iter().enumerate() {
            let c = channel(t.dims(), i);
            sum[c] += v;
            sq[c] += v * v;
            count[c] += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n.max(1) as f64).collect();
    let std: Vec<f64> = sq
        .iter()
        .zip(&count)
        .zip(&mean)
        .map(|((q, &n), m)| {
            let s = (q / n.max(1) as f64 - m * m).max(0.0).sqrt();
            if s < 1e-6 {
                1.0
            } else {
                s
            }
        })
        .collect();
    (round_to_f32(&Tensor::vector(mean)), round_to_f32(&Tensor::vector(std)))
}

fn standardize(t: &Tensor, mean: &[f64], std: &[f64], channel: impl Fn(usize) -> usize) -> Result<Tensor> {
    let values = t
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = channel(i);
            (v - mean[c]) / std[c]
        })
        .collect();
    Tensor::new(t.dims().to_vec(), values)
}

impl FeatureNorm {
    pub fn identity(coeffs: usize) -> Self {
        Self {
            audio_mean: Tensor::zeros(&[coeffs]),
            audio_std: Tensor::filled(&[coeffs], 1.0),
            visual_mean: Tensor::zeros(&[3]),
            visual_std: Tensor::filled(&[3], 1.0),
        }
    }

    pub fn fit(samples: &[Sample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Input("cannot fit normalization on zero samples".into()))?;
        let coeffs = first.audio.dims()[1];
        for s in samples {
            check_layout(s, coeffs)?;
        }
        let (audio_mean, audio_std) =
            channel_stats(coeffs, samples.iter().map(|s| &s.audio), |_, i| i % coeffs);
        let (visual_mean, visual_std) = channel_stats(3, samples.iter().map(|s| &s.visual), |d, i| {
            let plane = d[2] * d[3];
            (i / plane) % 3
        });
        Ok(Self {
            audio_mean,
            audio_std,
            visual_mean,
            visual_std,
        })
    }

    pub fn apply(&self, sample: &Sample) -> Result<Sample> {
        let coeffs = self.audio_mean.len();
        check_layout(sample, coeffs)?;
        let plane = sample.visual.dims()[2] * sample.visual.dims()[3];
        Ok(Sample {
            visual: standardize(&sample.visual, self.visual_mean.values(), self.visual_std.values(), |i| {
                (i / plane) % 3
            })?,
            audio: standardize(&sample.audio, self.audio_mean.values(), self.audio_std.values(), |i| {
                i % coeffs
            })?,
            label: sample.label,
        })
    }

    pub fn apply_all(&self, samples: &[Sample]) -> Result<Vec<Sample>> {
        samples.iter().map(|s| self.apply(s)).collect()
    }
}

fn check_layout(s: &Sample, coeffs: usize) -> Result<()> {
    match (s.visual.dims(), s.audio.dims()) {
        ([_, 3, _, _], [_, c]) if *c == coeffs => Ok(()),
        (v, a) => Err(Error::Shape(format!(
            "sample layout {v:?} / {a:?} is not K×3×H×W / T×{coeffs}"
        ))),
    }
}
