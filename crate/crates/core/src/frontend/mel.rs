use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale spanning 0 Hz to Nyquist.
///
/// Filter `m` has corners at mel points `m`, `m+1`, `m+2` of `n_mels + 2`
/// equally spaced points; each FFT bin `k` (frequency `k·sr/n_fft`) is
/// weighted by its position on the triangle. Returns `n_mels` rows of
/// `n_fft/2 + 1` weights.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Result<Vec<Vec<f64>>> {
    if n_mels == 0 {
        return Err(Error::Config("n_mels must be at least 1".into()));
    }
    if !n_fft.is_power_of_two() || n_fft < 2 {
        return Err(Error::Config(format!("n_fft {n_fft} is not a power of two")));
    }
    if n_fft < 2 * n_mels {
        return Err(Error::Config(format!("{n_mels} mel filters is too many for n_fft {n_fft}")));
    }
    if sample_rate <= 0.0 {
        return Err(Error::Config("sample rate must be positive".into()));
    }
    let bins = n_fft / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let corners: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bank: Vec<Vec<f64>> = corners
        .windows(3)
        .map(|c| {
            let (lo, mid, hi) = (c[0], c[1], c[2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / n_fft as f64;
                    let rise = (f - lo) / (mid - lo);
                    let fall = (hi - f) / (hi - mid);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect();

    let mut last_peak = None;
    for (m, row) in bank.iter().enumerate() {
        let peak = peak_bin(row);
        if row[peak] <= 0.0 || last_peak.is_some_and(|p| peak <= p) {
            return Err(Error::Config(format!(
                "{n_mels} mel filters cannot be resolved with n_fft {n_fft} (filter {m})"
            )));
        }
        last_peak = Some(peak);
    }
    Ok(bank)
}

/// Index of the largest weight (first on ties).
pub fn peak_bin(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_of_700_hz() {
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn filters_are_nonnegative_and_unimodal() {
        let bank = mel_filterbank(26, 512, 16000.0).unwrap();
        assert_eq!(bank.len(), 26);
        for row in &bank {
            assert_eq!(row.len(), 257);
            assert!(row.iter().all(|&w| w >= 0.0));
            let p = peak_bin(row);
            assert!(row[..=p].windows(2).all(|w| w[0] <= w[1]));
            assert!(row[p..].windows(2).all(|w| w[0] >= w[1]));
        }
        let peaks: Vec<usize> = bank.iter().map(|r| peak_bin(r)).collect();
        assert!(peaks.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn configuration_errors() {
        assert!(mel_filterbank(0, 512, 16000.0).is_err());
        assert!(mel_filterbank(26, 500, 16000.0).is_err());
        assert!(mel_filterbank(300, 512, 16000.0).is_err());
        // allowed by the size rule but too narrow at the low end
        assert!(mel_filterbank(128, 256, 16000.0).is_err());
    }
}
