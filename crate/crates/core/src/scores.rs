use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trait order used in every file, table and tensor: E, N, A, C, O.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trait {
    Extraversion,
    Neuroticism,
    Agreeableness,
    Conscientiousness,
    Openness,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Extraversion,
        Trait::Neuroticism,
        Trait::Agreeableness,
        Trait::Conscientiousness,
        Trait::Openness,
    ];

    pub fn letter(self) -> &'static str {
        match self {
            Trait::Extraversion => "E",
            Trait::Neuroticism => "N",
            Trait::Agreeableness => "A",
            Trait::Conscientiousness => "C",
            Trait::Openness => "O",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// Five trait values in `[0, 1]`, ordered E, N, A, C, O.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigFiveScores([f64; 5]);

impl BigFiveScores {
    pub fn new(values: [f64; 5]) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input(format!(
                "trait {} = {} outside [0, 1]",
                Trait::ALL[j],
                values[j]
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(v: f64) -> Result<Self> {
        Self::new([v; 5])
    }

    pub fn values(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn get(&self, t: Trait) -> f64 {
        self.0[t.index()]
    }
}

impl TryFrom<&[f64]> for BigFiveScores {
    type Error = Error;

    fn try_from(v: &[f64]) -> Result<Self> {
        let arr: [f64; 5] = v
            .try_into()
            .map_err(|_| Error::Shape(format!("expected 5 trait values, got {}", v.len())))?;
        Self::new(arr)
    }
}
