//! Checkpoint directory: `checkpoint.json` plus one tensor file per parameter.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::network::{Architecture, FeatureNorm, Model};
use crate::datastore::{read_tensor, write_atomic, write_tensor};
use crate::diffcore::ParamSet;
use crate::error::{Error, Result};
use crate::mas::Sample;
use crate::metrics::Predictor;
use crate::scores::BigFiveScores;

pub const CHECKPOINT_MANIFEST: &str = "checkpoint.json";
const FORMAT: &str = "msma-checkpoint";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    /// Samples the optimizer stepped on this epoch (6× the base set under augmentation).
    pub samples_seen: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: Model,
    /// Epoch whose parameters were retained.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    dims: Vec<usize>,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    epoch: usize,
    config: TrainConfig,
    norm: Vec<String>,
    params: Vec<ParamEntry>,
    history: Vec<EpochRecord>,
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.file_name().is_some_and(|n| n == CHECKPOINT_MANIFEST) {
        path.to_path_buf()
    } else {
        path.join(CHECKPOINT_MANIFEST)
    }
}

const NORM_FILES: [&str; 4] = [
    "norm/audio_mean.msma",
    "norm/audio_std.msma",
    "norm/visual_mean.msma",
    "norm/visual_std.msma",
];

impl Checkpoint {
    fn norm_tensors(&self) -> [&crate::diffcore::Tensor; 4] {
        let n = &self.model.norm;
        [&n.audio_mean, &n.audio_std, &n.visual_mean, &n.visual_std]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut params = Vec::with_capacity(self.model.params.len());
        for (name, t) in self.model.params.iter() {
            let file = format!("params/{name}.msma");
            write_tensor(&dir.join(&file), t)?;
            params.push(ParamEntry {
                name: name.to_string(),
                dims: t.dims().to_vec(),
                file,
            });
        }
        for (file, t) in NORM_FILES.iter().zip(self.norm_tensors()) {
            write_tensor(&dir.join(file), t)?;
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            epoch: self.epoch,
            config: self.config.clone(),
            norm: NORM_FILES.iter().map(|f| f.to_string()).collect(),
            params,
            history: self.history.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&dir.join(CHECKPOINT_MANIFEST), text.as_bytes())
    }

    /// Accepts the checkpoint directory or its `checkpoint.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let mpath = manifest_path(path);
        if !mpath.is_file() {
            return Err(Error::Load { path: mpath });
        }
        let dir = mpath.parent().unwrap_or(Path::new("."));
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;
        if m.format != FORMAT || m.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported checkpoint {} v{}",
                mpath.display(),
                m.format,
                m.version
            )));
        }
        m.config.validate()?;
        let mut params = ParamSet::new();
        for p in &m.params {
            let t = read_tensor(&dir.join(&p.file))?;
            if t.dims() != p.dims.as_slice() {
                return Err(Error::Corruption(format!(
                    "{}: dims {:?} disagree with manifest {:?}",
                    p.file,
                    t.dims(),
                    p.dims
                )));
            }
            params.insert(p.name.clone(), t);
        }
        if m.norm.len() != NORM_FILES.len() {
            return Err(Error::Format(format!("{}: expected {} norm tensors", mpath.display(), NORM_FILES.len())));
        }
        let norm = FeatureNorm {
            audio_mean: read_tensor(&dir.join(&m.norm[0]))?,
            audio_std: read_tensor(&dir.join(&m.norm[1]))?,
            visual_mean: read_tensor(&dir.join(&m.norm[2]))?,
            visual_std: read_tensor(&dir.join(&m.norm[3]))?,
        };
        let model = Model::new(Architecture::new(m.config.branch())?, params, norm)?;
        Ok(Self {
            config: m.config,
            model,
            epoch: m.epoch,
            history: m.history,
        })
    }
}

impl Predictor for Checkpoint {
    fn predict(&self, sample: &Sample) -> Result<BigFiveScores> {
        self.model.predict(sample)
    }
}
