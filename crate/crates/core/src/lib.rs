//! Audio-visual Big Five personality regression.
//!
//! Pipeline: MFCC and frame frontends, per-modality convolutional stems with a
//! multi-scale feature enhancement block, bidirectional cross-attention
//! fusion, a sigmoid regression head, modality-augmentation training and a
//! robustness evaluation over corrupted-modality scenarios.

pub mod branch_net;
pub mod datastore;
pub mod diffcore;
pub mod error;
pub mod frontend;
pub mod fusion;
pub mod mas;
pub mod metrics;
pub mod msfem;
pub mod scores;
pub mod trainer;

pub use error::{Error, Result};
pub use scores::{BigFiveScores, Trait};
