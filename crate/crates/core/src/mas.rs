//! Modality augmentation: six training forms per sample and the corrupted-modality
//! evaluation scenarios.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scores::BigFiveScores;

/// One model input: `K×3×H×W` frames, `T×10` MFCC, and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub visual: Tensor,
    pub audio: Tensor,
    pub label: BigFiveScores,
}

pub const GROUP_SIZE: usize = 6;

pub const FORM_NAMES: [&str; GROUP_SIZE] = [
    "original",
    "audio_empty",
    "visual_empty",
    "audio_noise",
    "visual_noise",
    "attenuated",
];

/// The original sample followed by its five derived forms, all sharing one label.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGroup {
    forms: Vec<Sample>,
}

impl AugmentedGroup {
    pub fn forms(&self) -> &[Sample] {
        &self.forms
    }

    pub fn into_forms(self) -> Vec<Sample> {
        self.forms
    }

    pub fn label(&self) -> &BigFiveScores {
        &self.forms[0].label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasConfig {
    /// Attenuation factor is drawn from `[alpha_low, alpha_high)`; equal bounds pin it.
    pub alpha_low: f64,
    pub alpha_high: f64,
}

impl Default for MasConfig {
    fn default() -> Self {
        Self {
            alpha_low: 0.3,
            alpha_high: 1.0,
        }
    }
}

impl MasConfig {
    pub fn pinned(alpha: f64) -> Self {
        Self {
            alpha_low: alpha,
            alpha_high: alpha,
        }
    }

    fn draw_alpha<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.alpha_high > self.alpha_low {
            rng.random_range(self.alpha_low..self.alpha_high)
        } else {
            self.alpha_low
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    StandardNormal,
    /// Gaussian with the input's own mean and standard deviation.
    Matched,
}

fn standard_normal<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Tensor {
    let n: usize = dims.iter().product();
    let values = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(dims.to_vec(), values).expect("dims come from an existing tensor")
}

/// `x + ε` with `ε` drawn elementwise; matched noise on a constant input returns `x`.
pub fn add_noise<R: Rng + ?Sized>(x: &Tensor, kind: NoiseKind, rng: &mut R) -> Tensor {
    let v = x.values();
    let (mean, std) = match kind {
        NoiseKind::StandardNormal => (0.0, 1.0),
        NoiseKind::Matched => {
            if v.iter().all(|a| *a == v[0]) {
                return x.clone();
            }
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            (mean, std)
        }
    };
    let dist = Normal::new(mean, std).expect("finite positive std");
    let values = v.iter().map(|a| a + dist.sample(rng)).collect();
    Tensor::new(x.dims().to_vec(), values).expect("same dims")
}

fn zeros_like(x: &Tensor) -> Tensor {
    Tensor::zeros(x.dims())
}

/// Expands `s` into the six training forms. Draws audio noise, then visual
/// noise, then the shared attenuation factor.
pub fn expand_group<R: Rng + ?Sized>(s: &Sample, rng: &mut R, cfg: &MasConfig) -> AugmentedGroup {
    let with = |visual: Tensor, audio: Tensor| Sample {
        visual,
        audio,
        label: s.label,
    };
    let audio_noise = add_noise(&s.audio, NoiseKind::StandardNormal, rng);
    let visual_noise = add_noise(&s.visual, NoiseKind::StandardNormal, rng);
    let alpha = cfg.draw_alpha(rng);
    let forms = vec![
        s.clone(),
        with(s.visual.clone(), zeros_like(&s.audio)),
        with(zeros_like(&s.visual), s.audio.clone()),
        with(s.visual.clone(), audio_noise),
        with(visual_noise, s.audio.clone()),
        with(s.visual.map(|v| v * alpha), s.audio.map(|v| v * alpha)),
    ];
    AugmentedGroup { forms }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Clean,
    OnlyVideo,
    OnlyAudio,
    VideoFullNoise,
    AudioFullNoise,
    VideoNoise,
    AudioNoise,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Clean,
        Scenario::OnlyVideo,
        Scenario::OnlyAudio,
        Scenario::VideoFullNoise,
        Scenario::AudioFullNoise,
        Scenario::VideoNoise,
        Scenario::AudioNoise,
    ];

    pub const NON_IDEAL: [Scenario; 6] = [
        Scenario::OnlyVideo,
        Scenario::OnlyAudio,
        Scenario::VideoFullNoise,
        Scenario::AudioFullNoise,
        Scenario::VideoNoise,
        Scenario::AudioNoise,
    ];

    /// Command-line spelling.
    pub fn tag(self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::OnlyVideo => "only-video",
            Scenario::OnlyAudio => "only-audio",
            Scenario::VideoFullNoise => "video-full-noise",
            Scenario::AudioFullNoise => "audio-full-noise",
            Scenario::VideoNoise => "video-noise",
            Scenario::AudioNoise => "audio-noise",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// Accepts the hyphenated tags and their snake_case equivalents.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('_', "-");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.tag() == norm)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

pub fn apply_scenario<R: Rng + ?Sized>(s: &Sample, scenario: Scenario, rng: &mut R) -> Sample {
    let mut out = s.clone();
    match scenario {
        Scenario::Clean => {}
        Scenario::OnlyVideo => out.audio = zeros_like(&s.audio),
        Scenario::OnlyAudio => out.visual = zeros_like(&s.visual),
        Scenario::VideoFullNoise => out.visual = standard_normal(s.visual.dims(), rng),
        Scenario::AudioFullNoise => out.audio = standard_normal(s.audio.dims(), rng),
        Scenario::VideoNoise => out.visual = add_noise(&s.visual, NoiseKind::Matched, rng),
        Scenario::AudioNoise => out.audio = add_noise(&s.audio, NoiseKind::Matched, rng),
    }
    out
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-sample generator seed from the run seed, sample index and epoch.
pub fn derive_seed(run_seed: u64, sample_index: u64, epoch: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(run_seed) ^ sample_index) ^ epoch)
}
