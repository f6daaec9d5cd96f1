//! Per-modality encoders that turn frame stacks and MFCC matrices into token
//! sequences of a common width.
//!
//! Visual: each frame passes three stride-2 3×3 convolutions with relu, the
//! enhancement block, global average pooling and a projection, giving one
//! token per frame. Audio: the `T×10` matrix is a one-channel map; a 3×3
//! convolution with time stride `s` yields `ceil(T/s)` rows, followed by the
//! enhancement block, a mean over the coefficient axis and a projection.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Bindings, ConvLayer, DenseLayer, ParamDecl, Tape, Var};
use crate::error::{Error, Result};
use crate::msfem::{msfem_forward, MsfemParams, MsfemShape};

pub const STEM_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Visual,
    Audio,
}

impl Modality {
    pub fn prefix(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
        }
    }
}

/// `n×d` token matrix on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TokenSequence {
    pub tokens: Var,
    pub modality: Modality,
}

impl TokenSequence {
    pub fn len(&self, tape: &Tape) -> usize {
        tape.dims(self.tokens)[0]
    }

    pub fn width(&self, tape: &Tape) -> usize {
        tape.dims(self.tokens)[1]
    }
}

/// Encoder shape shared by both branches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub visual_channels: Vec<usize>,
    pub audio_channels: usize,
    pub audio_stride: usize,
    pub width: usize,
    pub use_msfem: bool,
}

impl Default for BranchConfig {
    fn default() -> Self {
        Self {
            visual_channels: vec![8, 16, 32],
            audio_channels: 16,
            audio_stride: 4,
            width: 32,
            use_msfem: true,
        }
    }
}

impl BranchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.visual_channels.is_empty() || self.visual_channels.contains(&0) {
            return Err(Error::Config("visual_channels must be nonempty and positive".into()));
        }
        if self.audio_channels == 0 || self.audio_stride == 0 || self.width == 0 {
            return Err(Error::Config("audio_channels, audio_stride and width must be positive".into()));
        }
        if self.use_msfem {
            MsfemShape::for_channels(*self.visual_channels.last().unwrap())?;
            MsfemShape::for_channels(self.audio_channels)?;
        }
        Ok(())
    }

    fn enhancer_channels(&self, modality: Modality) -> usize {
        match modality {
            Modality::Visual => *self.visual_channels.last().unwrap(),
            Modality::Audio => self.audio_channels,
        }
    }

    pub fn declare(&self, modality: Modality, decls: &mut Vec<ParamDecl>) -> Result<()> {
        self.validate()?;
        let pre = modality.prefix();
        match modality {
            Modality::Visual => {
                let mut c_in = 3;
                for (i, &c) in self.visual_channels.iter().enumerate() {
                    ConvLayer::declare(&format!("{pre}.stem{i}"), c_in, c, STEM_KERNEL, decls);
                    c_in = c;
                }
            }
            Modality::Audio => {
                ConvLayer::declare(&format!("{pre}.stem"), 1, self.audio_channels, STEM_KERNEL, decls);
            }
        }
        let c = self.enhancer_channels(modality);
        if self.use_msfem {
            MsfemShape::for_channels(c)?.declare(&format!("{pre}.msfem"), decls);
        } else {
            ConvLayer::declare(&format!("{pre}.enhance"), c, c, 3, decls);
        }
        DenseLayer::declare(&format!("{pre}.proj"), c, self.width, decls);
        Ok(())
    }
}

/// Either the multi-scale block or, for the ablation arm, a single 3×3 conv.
#[derive(Debug, Clone, Copy)]
pub enum Enhancer {
    Msfem(MsfemParams),
    Plain(ConvLayer),
}

impl Enhancer {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Enhancer::Msfem(p) => msfem_forward(tape, x, p),
            Enhancer::Plain(c) => c.forward(tape, x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StemParams {
    pub modality: Modality,
    pub convs: Vec<ConvLayer>,
    pub enhancer: Enhancer,
    pub projection: DenseLayer,
}

impl StemParams {
    pub fn bind(b: &Bindings, cfg: &BranchConfig, modality: Modality) -> Result<Self> {
        let pre = modality.prefix();
        let convs = match modality {
            Modality::Visual => (0..cfg.visual_channels.len())
                .map(|i| ConvLayer::bind(b, &format!("{pre}.stem{i}"), (2, 2), 1))
                .collect::<Result<Vec<_>>>()?,
            Modality::Audio => vec![ConvLayer::bind(b, &format!("{pre}.stem"), (cfg.audio_stride, 1), 1)?],
        };
        let enhancer = if cfg.use_msfem {
            Enhancer::Msfem(MsfemParams::bind(b, &format!("{pre}.msfem"))?)
        } else {
            Enhancer::Plain(ConvLayer::bind(b, &format!("{pre}.enhance"), (1, 1), 1)?)
        };
        Ok(Self {
            modality,
            convs,
            enhancer,
            projection: DenseLayer::bind(b, &format!("{pre}.proj"))?,
        })
    }
}

fn expect_modality(p: &StemParams, m: Modality) -> Result<()> {
    if p.modality != m {
        return Err(Error::Config(format!("{:?} stem given {:?} parameters", m, p.modality)));
    }
    Ok(())
}

/// Encodes a `K×3×H×W` frame stack into `K` tokens, one per frame in order.
pub fn visual_stem(tape: &mut Tape, frames: Var, params: &StemParams) -> Result<TokenSequence> {
    expect_modality(params, Modality::Visual)?;
    let dims = tape.dims(frames).to_vec();
    let [k, 3, h, w] = dims[..] else {
        return Err(Error::Config(format!("visual stem expects K×3×H×W frames, got {dims:?}")));
    };
    let mut tokens = Vec::with_capacity(k);
    for i in 0..k {
        let frame = tape.slice(frames, i, 1)?;
        let mut x = tape.reshape(frame, &[3, h, w])?;
        for conv in &params.convs {
            let y = conv.forward(tape, x).map_err(as_config)?;
            x = tape.relu(y);
        }
        let x = params.enhancer.forward(tape, x)?;
        let pooled = tape.global_average_pool(x)?;
        let c = tape.value(pooled).len();
        let row = tape.reshape(pooled, &[1, c])?;
        tokens.push(params.projection.forward(tape, row)?);
    }
    Ok(TokenSequence {
        tokens: tape.concat(&tokens)?,
        modality: Modality::Visual,
    })
}

/// Encodes a `T×n_coeff` MFCC matrix into `ceil(T/s)` time tokens.
pub fn audio_stem(tape: &mut Tape, mfcc: Var, params: &StemParams) -> Result<TokenSequence> {
    expect_modality(params, Modality::Audio)?;
    let dims = tape.dims(mfcc).to_vec();
    let [t, n_coeff] = dims[..] else {
        return Err(Error::Config(format!("audio stem expects a T×coeff matrix, got {dims:?}")));
    };
    if t < STEM_KERNEL {
        return Err(Error::Input(format!(
            "{t} MFCC frames is below the stem receptive field of {STEM_KERNEL}"
        )));
    }
    let x = tape.reshape(mfcc, &[1, t, n_coeff])?;
    let stem = params.convs[0];
    let y = stem.forward(tape, x).map_err(as_config)?;
    let y = tape.relu(y);
    let y = params.enhancer.forward(tape, y)?;
    let per_step = tape.mean_last_axis(y)?; // C×M
    let rows = tape.transpose(per_step)?; // M×C
    Ok(TokenSequence {
        tokens: params.projection.forward(tape, rows)?,
        modality: Modality::Audio,
    })
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Shape(m) => Error::Config(m),
        other => other,
    }
}

/// Number of audio tokens for `t` MFCC frames at time stride `s`.
pub fn audio_token_count(t: usize, s: usize) -> usize {
    t.div_ceil(s)
}
