use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::branch_net::BranchConfig;
use crate::error::{Error, Result};
use crate::frontend::FrontendConfig;
use crate::mas::MasConfig;

/// Training hyperparameters plus the desk-scale model and frontend sizes.
///
/// The text form is one `key=value` per line using the field names below;
/// `#` starts a comment and lists are comma-separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub seed: u64,
    pub initial_lr: f64,
    pub epochs: usize,
    pub milestones: Vec<usize>,
    pub use_msfem: bool,
    pub use_mas: bool,
    pub frames: usize,
    pub image_size: usize,
    pub width: usize,
    pub visual_channels: Vec<usize>,
    pub audio_channels: usize,
    pub audio_stride: usize,
    pub alpha_low: f64,
    pub alpha_high: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            seed: 1,
            initial_lr: 0.04,
            epochs: 70,
            milestones: vec![30, 45, 55, 60],
            use_msfem: true,
            use_mas: true,
            frames: 8,
            image_size: 32,
            width: 32,
            visual_channels: vec![8, 16, 32],
            audio_channels: 16,
            audio_stride: 4,
            alpha_low: 0.3,
            alpha_high: 1.0,
        }
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad_value(key, v)))
        .collect()
}

fn bad_value(key: &str, v: &str) -> Error {
    Error::Config(format!("invalid value '{v}' for {key}"))
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!("initial_lr must be positive, got {}", self.initial_lr)));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("milestones {:?} must be strictly increasing", self.milestones)));
        }
        if self.milestones.last().is_some_and(|&m| m >= self.epochs) {
            return Err(Error::Config(format!(
                "milestones {:?} must be below epochs {}",
                self.milestones, self.epochs
            )));
        }
        if !(0.0 <= self.alpha_low && self.alpha_low <= self.alpha_high) {
            return Err(Error::Config("need 0 ≤ alpha_low ≤ alpha_high".into()));
        }
        self.branch().validate()?;
        self.frontend().validate()
    }

    pub fn branch(&self) -> BranchConfig {
        BranchConfig {
            visual_channels: self.visual_channels.clone(),
            audio_channels: self.audio_channels,
            audio_stride: self.audio_stride,
            width: self.width,
            use_msfem: self.use_msfem,
        }
    }

    pub fn frontend(&self) -> FrontendConfig {
        FrontendConfig {
            frames: self.frames,
            image_size: self.image_size,
            ..FrontendConfig::default()
        }
    }

    pub fn mas(&self) -> MasConfig {
        MasConfig {
            alpha_low: self.alpha_low,
            alpha_high: self.alpha_high,
        }
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        macro_rules! num {
            () => {
                v.parse().map_err(|_| bad_value(key, v))?
            };
        }
        match key {
            "batch_size" => self.batch_size = num!(),
            "seed" => self.seed = num!(),
            "initial_lr" => self.initial_lr = num!(),
            "epochs" => self.epochs = num!(),
            "milestones" => self.milestones = parse_list(key, v)?,
            "use_msfem" => self.use_msfem = num!(),
            "use_mas" => self.use_mas = num!(),
            "frames" => self.frames = num!(),
            "image_size" => self.image_size = num!(),
            "width" => self.width = num!(),
            "visual_channels" => self.visual_channels = parse_list(key, v)?,
            "audio_channels" => self.audio_channels = num!(),
            "audio_stride" => self.audio_stride = num!(),
            "alpha_low" => self.alpha_low = num!(),
            "alpha_high" => self.alpha_high = num!(),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key=value` text over the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "initial_lr={}", self.initial_lr);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "milestones={}", join(&self.milestones));
        let _ = writeln!(s, "use_msfem={}", self.use_msfem);
        let _ = writeln!(s, "use_mas={}", self.use_mas);
        let _ = writeln!(s, "frames={}", self.frames);
        let _ = writeln!(s, "image_size={}", self.image_size);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "visual_channels={}", join(&self.visual_channels));
        let _ = writeln!(s, "audio_channels={}", self.audio_channels);
        let _ = writeln!(s, "audio_stride={}", self.audio_stride);
        let _ = writeln!(s, "alpha_low={}", self.alpha_low);
        let _ = writeln!(s, "alpha_high={}", self.alpha_high);
        s
    }
}

/// `initial_lr / 10^k` where `k` counts milestones at or before `epoch`.
pub fn lr_at_epoch(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::Config(format!("epoch {epoch} outside 0..{}", config.epochs)));
    }
    let drops = config.milestones.iter().filter(|&&m| m <= epoch).count();
    Ok(config.initial_lr / 10f64.powi(drops as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_literals() {
        let c = TrainConfig::default();
        assert_eq!(lr_at_epoch(0, &c).unwrap(), 0.04);
        assert_eq!(lr_at_epoch(29, &c).unwrap(), 0.04);
        assert_eq!(lr_at_epoch(30, &c).unwrap(), 0.004);
        assert_eq!(lr_at_epoch(45, &c).unwrap(), 0.0004);
        assert_eq!(lr_at_epoch(55, &c).unwrap(), 0.00004);
        assert_eq!(lr_at_epoch(60, &c).unwrap(), 0.000004);
        assert_eq!(lr_at_epoch(69, &c).unwrap(), 4e-6);
        assert!(lr_at_epoch(70, &c).is_err());
    }

    #[test]
    fn kv_roundtrip() {
        let mut c = TrainConfig::default();
        c.milestones = vec![];
        c.use_mas = false;
        c.initial_lr = 0.015;
        assert_eq!(TrainConfig::parse(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn parse_errors() {
        assert!(TrainConfig::parse("nonsense=1").is_err());
        assert!(TrainConfig::parse("epochs=ten").is_err());
        assert!(TrainConfig::parse("milestones=30,20").is_err());
        assert!(TrainConfig::parse("epochs=10\nmilestones=5,10").is_err());
        assert!(TrainConfig::parse("initial_lr=0").is_err());
        assert!(TrainConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn comments_and_blanks() {
        let c = TrainConfig::parse("# desk run\n\nepochs = 12 # short\nmilestones=4, 8\n").unwrap();
        assert_eq!(c.epochs, 12);
        assert_eq!(c.milestones, vec![4, 8]);
    }
}
