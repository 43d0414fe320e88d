//! Pairwise coreference scorer.
//!
//! A pair of records becomes a feature vector (encoder outputs, optionally
//! an FL bin embedding) which a two-hidden-layer feed-forward network maps
//! to a link probability. Training uses binary cross-entropy with AdamW;
//! gradients are derived by hand.

mod checkpoint;
mod features;
mod inference;
mod network;
mod params;
mod train;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{EncoderFingerprint, EncodingError};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use features::{assemble_features, encode_pair, feature_width, EncodedPair, PairInput};
pub use inference::{
    score_matrix, select_threshold, LinkScore, ModelScorer, PairScorer, PairScores, ThresholdChoice,
};
pub use network::{
    bce_loss, forward, gradient_check, loss_and_gradients, predict, Gradients, TensorCheck, LOSS_CLAMP,
};
pub use params::ScorerParams;
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Joint summary, attention-pooled sides and their product.
    Cdcr,
    /// Joint summary vector only.
    Nli,
    /// Independent summaries and their product.
    Sts,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Cdcr => "cdcr",
            Mode::Nli => "nli",
            Mode::Sts => "sts",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchMode {
    pub mode: Mode,
    pub use_fl: bool,
}

impl ArchMode {
    pub fn new(mode: Mode, use_fl: bool) -> Self {
        Self { mode, use_fl }
    }
}

impl Default for ArchMode {
    fn default() -> Self {
        Self::new(Mode::Cdcr, true)
    }
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("encoding pair ({a}, {b}) failed: {source}")]
    Encoding {
        a: String,
        b: String,
        #[source]
        source: EncodingError,
    },
    #[error("record `{0}` not found in corpus")]
    UnknownRecord(String),
    #[error("feature width {got} does not match expected {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("{what} does not match: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("training diverged in epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },
    #[error("non-finite activation in forward pass")]
    NonFinite,
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("predictions and labels differ in length ({predictions} vs {labels})")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("threshold selection needs both classes in the dev pairs")]
    SingleClass,
    #[error("checkpoint was trained with encoder {expected:?} but {got:?} is active")]
    FingerprintMismatch {
        expected: EncoderFingerprint,
        got: EncoderFingerprint,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("checkpoint I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScorerError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, ScorerError::Divergence { .. } | ScorerError::NonFinite)
    }
}
