//! Planted synthetic corpus.
//!
//! Each sample draws two hidden scalars `u, v ∈ [0, 1)` that share a latent
//! component, so they are centred and partially correlated. Frames show a
//! sinusoidal intensity grating whose gradient points at angle `u·π/2` (plus a
//! small per-frame brightness offset); audio is a pure tone at
//! `300 + 1500·v` Hz. Labels:
//! `E = u`, `A = 1 − u`, `O = (1 + u)/2`, `N = v`, `C = 0.2 + 0.6·(1 − v)`,
//! so the video alone fixes E, A, O and the audio alone fixes N, C.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datastore::manifest::{format_manifest, ManifestRow, Split};
use crate::datastore::media::{write_frame_tensor, write_wav};
use crate::datastore::tensorfile::write_atomic;
use crate::error::{Error, Result};
use crate::frontend::RawImage;
use crate::scores::BigFiveScores;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub frames: usize,
    pub image_size: usize,
    pub sample_rate: u32,
    pub samples: usize,
    pub amplitude: f64,
    /// Mean frame intensity before the per-frame offset.
    pub brightness: f64,
    pub contrast: f64,
    pub offset_range: f64,
    /// Grating periods across the frame width.
    pub cycles: f64,
    /// Weight `s` of a latent shared by both hidden scalars:
    /// `u = s·z + (1 − s)·a`, `v = s·z + (1 − s)·b` with `z, a, b ~ U[0, 1)`.
    pub shared: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 12,
            image_size: 32,
            sample_rate: 16_000,
            samples: 8_000,
            amplitude: 0.5,
            brightness: 0.5,
            contrast: 0.35,
            offset_range: 0.1,
            cycles: 3.0,
            shared: 0.5,
        }
    }
}

pub const TONE_BASE_HZ: f64 = 300.0;
pub const TONE_SPAN_HZ: f64 = 1500.0;

pub fn tone_frequency(v: f64) -> f64 {
    TONE_BASE_HZ + TONE_SPAN_HZ * v
}

pub fn ramp_angle(u: f64) -> f64 {
    u * PI / 2.0
}

pub fn planted_labels(u: f64, v: f64) -> BigFiveScores {
    BigFiveScores::new([u, v, 1.0 - u, 0.2 + 0.6 * (1.0 - v), (1.0 + u) / 2.0]).expect("planted map stays in [0, 1]")
}

/// `i % 5`: 0–2 train, 3 val, 4 test.
pub fn split_for_index(i: usize) -> Split {
    match i % 5 {
        0..=2 => Split::Train,
        3 => Split::Val,
        _ => Split::Test,
    }
}

/// Pixel `(y, x)` = `brightness + offset + contrast·sin(2π·cycles·(x_c·cos θ + y_c·sin θ))`
/// on all channels, with centred coordinates `x_c = (x + 0.5)/size − 0.5`.
pub fn planted_frame(u: f64, offset: f64, cfg: &SynthConfig) -> RawImage {
    let size = cfg.image_size;
    let (s, c) = ramp_angle(u).sin_cos();
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        let yc = (y as f64 + 0.5) / size as f64 - 0.5;
        for x in 0..size {
            let xc = (x as f64 + 0.5) / size as f64 - 0.5;
            let p = cfg.brightness + offset + cfg.contrast * (2.0 * PI * cfg.cycles * (xc * c + yc * s)).sin();
            data.extend([p; 3]);
        }
    }
    RawImage::new(size, size, data, 1.0).expect("size ≥ 1")
}

pub fn planted_tone(v: f64, phase: f64, cfg: &SynthConfig) -> Vec<f64> {
    let w = 2.0 * PI * tone_frequency(v) / cfg.sample_rate as f64;
    (0..cfg.samples).map(|n| cfg.amplitude * (w * n as f64 + phase).sin()).collect()
}

/// Writes `n` samples under `out` and returns the manifest path.
pub fn synth_dataset(out: &Path, n: usize, seed: u64) -> Result<PathBuf> {
    synth_dataset_with(out, n, seed, &SynthConfig::default())
}

pub fn synth_dataset_with(out: &Path, n: usize, seed: u64, cfg: &SynthConfig) -> Result<PathBuf> {
    if n == 0 {
        return Err(Error::Input("synthetic dataset needs at least one sample".into()));
    }
    if cfg.frames == 0 || cfg.image_size == 0 || cfg.samples == 0 {
        return Err(Error::Config("synthetic frames, image size and length must be positive".into()));
    }
    let swing = cfg.contrast.abs() + cfg.offset_range.abs();
    if cfg.brightness - swing < 0.0 || cfg.brightness + swing > 1.0 {
        return Err(Error::Config("brightness ± (contrast + offset range) must stay within [0, 1]".into()));
    }
    if !(0.0..1.0).contains(&cfg.shared) {
        return Err(Error::Config("shared latent weight must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("s{i:05}");
        let (z, a, b): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let u = cfg.shared * z + (1.0 - cfg.shared) * a;
        let v = cfg.shared * z + (1.0 - cfg.shared) * b;
        let phase = rng.random_range(0.0..2.0 * PI);
        let video_rel = format!("frames/{id}");
        let video_dir = out.join(&video_rel);
        if video_dir.exists() {
            fs::remove_dir_all(&video_dir).map_err(|e| Error::io(&video_dir, e))?;
        }
        for f in 0..cfg.frames {
            let offset = rng.random_range(-cfg.offset_range..=cfg.offset_range);
            let img = planted_frame(u, offset, cfg);
            write_frame_tensor(&video_dir.join(format!("frame_{f:04}.msma")), &img)?;
        }
        let audio_rel = format!("audio/{id}.wav");
        write_wav(&out.join(&audio_rel), &planted_tone(v, phase, cfg), cfg.sample_rate)?;
        rows.push(ManifestRow {
            id,
            visual: video_rel,
            audio: audio_rel,
            label: planted_labels(u, v),
            split: split_for_index(i),
        });
    }
    let manifest = out.join("manifest.csv");
    write_atomic(&manifest, &format_manifest(&rows)?)?;
    Ok(manifest)
}
