//! Manifest ingestion, tensor files, raw media, feature cache and the synthetic corpus.

pub mod manifest;
pub mod media;
pub mod synth;
pub mod tensorfile;

use std::fs;
use std::path::{Path, PathBuf};

pub use manifest::{format_manifest, load_manifest, ManifestEntry, ManifestRow, Split, MANIFEST_HEADER};
pub use media::{read_frame, read_video, read_wav, write_ppm, write_wav};
pub use synth::{planted_labels, synth_dataset, synth_dataset_with, SynthConfig};
pub use tensorfile::{decode_tensor, encode_tensor, read_tensor, round_to_f32, write_atomic, write_tensor};

use crate::error::{Error, Result};
use crate::frontend::{FrameStack, FrontendConfig, MfccExtractor};
use crate::mas::Sample;

pub const CACHE_SIDECAR: &str = "frontend.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub id: String,
    pub split: Split,
    pub sample: Sample,
}

/// Featurized manifest, in manifest order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn samples(&self, split: Split) -> Vec<Sample> {
        self.items
            .iter()
            .filter(|i| i.split == split)
            .map(|i| i.sample.clone())
            .collect()
    }

    pub fn all_samples(&self) -> Vec<Sample> {
        self.items.iter().map(|i| i.sample.clone()).collect()
    }
}

/// Frames and MFCC for one manifest entry, rounded to 32-bit precision so
/// cached and freshly computed features agree exactly.
pub fn extract_features(entry: &ManifestEntry, frontend: &FrontendConfig, mfcc: &MfccExtractor) -> Result<Sample> {
    let video = read_video(&entry.visual)?;
    if video.is_empty() {
        return Err(Error::Input(format!("{}: no frame files", entry.visual.display())));
    }
    let frames = FrameStack::from_video(&video, frontend.frames, frontend.image_size)?;
    let clip = read_wav(&entry.audio)?;
    let audio = mfcc.extract(&clip)?;
    Ok(Sample {
        visual: round_to_f32(frames.tensor()),
        audio: round_to_f32(audio.tensor()),
        label: entry.label,
    })
}

fn sidecar_text(frontend: &FrontendConfig) -> String {
    format!("fingerprint={}\n{}", frontend.fingerprint(), frontend.to_kv())
}

fn cache_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}.visual.msma")), dir.join(format!("{id}.audio.msma")))
}

/// Whether `dir` holds features computed under `frontend`.
pub fn cache_is_valid(dir: &Path, frontend: &FrontendConfig) -> bool {
    fs::read_to_string(dir.join(CACHE_SIDECAR)).is_ok_and(|s| s == sidecar_text(frontend))
}

/// Loads every manifest entry. With a cache directory, features are read from
/// it when its sidecar matches `frontend`; otherwise they are recomputed and
/// the cache is rewritten.
pub fn load_dataset(manifest: &Path, frontend: &FrontendConfig, cache: Option<&Path>) -> Result<Dataset> {
    frontend.validate()?;
    let entries = load_manifest(manifest)?;
    let extractor = MfccExtractor::new(frontend.mfcc.clone())?;
    let reuse = cache.is_some_and(|d| cache_is_valid(d, frontend));
    if let Some(dir) = cache {
        if !reuse {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let sidecar = dir.join(CACHE_SIDECAR);
            if sidecar.exists() {
                fs::remove_file(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            }
        }
    }
    let mut items = Vec::with_capacity(entries.len());
    for entry in &entries {
        let cached = match cache {
            Some(dir) if reuse => {
                let (vp, ap) = cache_paths(dir, &entry.id);
                match (read_tensor(&vp), read_tensor(&ap)) {
                    (Ok(visual), Ok(audio)) => Some(Sample {
                        visual,
                        audio,
                        label: entry.label,
                    }),
                    _ => None,
                }
            }
            _ => None,
        };
        let sample = match cached {
            Some(s) => s,
            None => {
                let s = extract_features(entry, frontend, &extractor)?;
                if let Some(dir) = cache {
                    let (vp, ap) = cache_paths(dir, &entry.id);
                    write_tensor(&vp, &s.visual)?;
                    write_tensor(&ap, &s.audio)?;
                }
                s
            }
        };
        items.push(DatasetItem {
            id: entry.id.clone(),
            split: entry.split,
            sample,
        });
    }
    if let Some(dir) = cache {
        if !reuse {
            write_atomic(&dir.join(CACHE_SIDECAR), sidecar_text(frontend).as_bytes())?;
        }
    }
    Ok(Dataset { items })
}

/// Fills `out` with cached features for every entry; returns the entry count.
pub fn prepare(manifest: &Path, out: &Path, frontend: &FrontendConfig) -> Result<usize> {
    Ok(load_dataset(manifest, frontend, Some(out))?.len())
}
