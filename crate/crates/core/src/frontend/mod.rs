//! Waveform and video frontends: MFCC matrices and sampled, resized frame stacks.

mod frames;
mod mel;
mod mfcc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use frames::{preprocess_frame, sample_frames, sample_indices, FrameStack, RawImage};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, peak_bin};
pub use mfcc::{hann, mfcc, AudioClip, MfccConfig, MfccExtractor, MfccMatrix, MFCC_COEFFS};

use crate::error::{Error, Result};

/// Everything that determines cached features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub mfcc: MfccConfig,
    pub frames: usize,
    pub image_size: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            mfcc: MfccConfig::default(),
            frames: 8,
            image_size: 32,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        self.mfcc.validate()?;
        if self.frames == 0 || self.image_size == 0 {
            return Err(Error::Config("frames and image_size must be positive".into()));
        }
        Ok(())
    }

    /// Canonical `key=value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let m = &self.mfcc;
        format!(
            "sample_rate={}\nwindow={}\nhop={}\nn_fft={}\nn_mels={}\nlog_floor={:e}\nframes={}\nimage_size={}\n",
            m.sample_rate, m.window, m.hop, m.n_fft, m.n_mels, m.log_floor, self.frames, self.image_size
        )
    }

    /// Hex SHA-256 of [`Self::to_kv`].
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_kv().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
