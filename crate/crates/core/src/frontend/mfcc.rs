use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::mel::mel_filterbank;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Coefficients kept per frame, including c0.
pub const MFCC_COEFFS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window: 400,
            hop: 160,
            n_fft: 512,
            n_mels: 26,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hop == 0 || self.window > self.n_fft {
            return Err(Error::Config(format!(
                "window {} / hop {} / n_fft {} are inconsistent",
                self.window, self.hop, self.n_fft
            )));
        }
        if self.n_mels < MFCC_COEFFS {
            return Err(Error::Config(format!("need at least {MFCC_COEFFS} mel filters")));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::Config("log floor must be positive".into()));
        }
        Ok(())
    }

    /// `1 + floor((len − window)/hop)`, or `None` when shorter than one window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.window).then(|| 1 + (len - self.window) / self.hop)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Input("audio clip has no samples".into()));
        }
        if let Some(v) = samples.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("sample {v} outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

/// `T×10` cepstral matrix (time × coefficient).
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    values: Tensor,
    frame_rate: f64,
}

impl MfccMatrix {
    pub fn new(values: Tensor, frame_rate: f64) -> Result<Self> {
        match values.dims() {
            [t, MFCC_COEFFS] if *t >= 1 => {}
            d => return Err(Error::Shape(format!("MFCC matrix must be T×{MFCC_COEFFS}, got {d:?}"))),
        }
        if !values.is_finite() {
            return Err(Error::Input("MFCC matrix has non-finite entries".into()));
        }
        Ok(Self { values, frame_rate })
    }

    pub fn frames(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn tensor(&self) -> &Tensor {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values.values()[t * MFCC_COEFFS..(t + 1) * MFCC_COEFFS]
    }
}

/// Symmetric Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Reusable MFCC pipeline for one configuration.
pub struct MfccExtractor {
    config: MfccConfig,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(config: MfccConfig) -> Result<Self> {
        config.validate()?;
        let filters = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate as f64)?;
        let m = config.n_mels;
        // orthonormal DCT-II rows
        let dct = (0..MFCC_COEFFS)
            .map(|k| {
                let s = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
                (0..m)
                    .map(|j| s * (PI * k as f64 * (2 * j + 1) as f64 / (2 * m) as f64).cos())
                    .collect()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(Self {
            window: hann(config.window),
            filters,
            dct,
            fft,
            config,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<MfccMatrix> {
        let cfg = &self.config;
        if clip.sample_rate() != cfg.sample_rate {
            return Err(Error::Input(format!(
                "clip sampled at {} Hz, extractor expects {} Hz",
                clip.sample_rate(),
                cfg.sample_rate
            )));
        }
        let x = clip.samples();
        let frames = cfg.frame_count(x.len()).ok_or_else(|| {
            Error::Input(format!("clip of {} samples is shorter than one {}-sample window", x.len(), cfg.window))
        })?;
        let bins = cfg.n_fft / 2 + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut magnitude = vec![0.0; bins];
        let mut log_mel = vec![0.0; cfg.n_mels];
        let mut out = Vec::with_capacity(frames * MFCC_COEFFS);
        for t in 0..frames {
            let start = t * cfg.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                let v = if i < cfg.window { x[start + i] * self.window[i] } else { 0.0 };
                *c = Complex::new(v, 0.0);
            }
            self.fft.process(&mut buf);
            for (m, c) in magnitude.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for (lm, filt) in log_mel.iter_mut().zip(&self.filters) {
                let e: f64 = filt.iter().zip(&magnitude).map(|(w, m)| w * m).sum();
                *lm = (e + cfg.log_floor).ln();
            }
            out.extend(self.dct.iter().map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum::<f64>()));
        }
        let values = Tensor::new(vec![frames, MFCC_COEFFS], out)?;
        MfccMatrix::new(values, cfg.sample_rate as f64 / cfg.hop as f64)
    }
}

/// framing → Hann → |FFT| → mel filterbank → ln(·+ε) → DCT-II → c0..c9.
pub fn mfcc(clip: &AudioClip, config: &MfccConfig) -> Result<MfccMatrix> {
    MfccExtractor::new(config.clone())?.extract(clip)
}
