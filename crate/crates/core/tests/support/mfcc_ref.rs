//! Textbook MFCC pipeline written independently of the crate.

use std::f64::consts::PI;

use msma_core::frontend::{MfccConfig, MFCC_COEFFS};

pub fn mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn inv_mel(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

pub fn reference_filterbank(n_mels: usize, n_fft: usize, sr: f64) -> Vec<Vec<f64>> {
    let top = mel(sr / 2.0);
    let step = top / (n_mels + 1) as f64;
    let mut bank = Vec::new();
    for m in 0..n_mels {
        let lo = inv_mel(step * m as f64);
        let mid = inv_mel(step * (m + 1) as f64);
        let hi = inv_mel(step * (m + 2) as f64);
        let mut row = Vec::new();
        for k in 0..=n_fft / 2 {
            let f = k as f64 * sr / n_fft as f64;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            row.push(w);
        }
        bank.push(row);
    }
    bank
}

/// Framing, Hann, O(N²) DFT magnitude, mel energies, natural log, orthonormal DCT-II.
pub fn reference_mfcc(x: &[f64], cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let bank = reference_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate as f64);
    let n = cfg.window;
    let hann: Vec<f64> = (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos())).collect();
    let mut rows = Vec::new();
    let mut start = 0;
    while start + n <= x.len() {
        let frame: Vec<f64> = (0..n).map(|i| x[start + i] * hann[i]).collect();
        let mag: Vec<f64> = (0..=cfg.n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in frame.iter().enumerate() {
                    let a = 2.0 * PI * (k * i % cfg.n_fft) as f64 / cfg.n_fft as f64;
                    re += v * a.cos();
                    im -= v * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let logs: Vec<f64> = bank
            .iter()
            .map(|f| (f.iter().zip(&mag).map(|(w, m)| w * m).sum::<f64>() + cfg.log_floor).ln())
            .collect();
        let m = cfg.n_mels as f64;
        let row = (0..MFCC_COEFFS)
            .map(|k| {
                let norm = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
                norm * logs
                    .iter()
                    .enumerate()
                    .map(|(j, l)| l * (PI * k as f64 * (j as f64 + 0.5) / m).cos())
                    .sum::<f64>()
            })
            .collect();
        rows.push(row);
        start += cfg.hop;
    }
    rows
}

pub fn sine(freq: f64, secs: f64, sr: u32) -> Vec<f64> {
    let n = (secs * sr as f64) as usize;
    (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect()
}
