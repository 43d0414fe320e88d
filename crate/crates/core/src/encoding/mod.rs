//! Text encoders.
//!
//! An [`Encoder`] produces a joint encoding of a record pair (a summary
//! vector for the concatenated sequence plus per-token vectors of each side)
//! and independent single-record encodings. Two backends exist: a
//! deterministic hashing encoder that needs no model, and an HTTP client for
//! a transformer encoding service.

mod builtin;
mod pool;
mod remote;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Record;

pub use builtin::{
    builtin_cls_vector, builtin_token_vectors, tokenize, BuiltinEncoder, BUILTIN_DEFAULT_SEED,
};
pub use pool::{attention_pool, attention_pool_backward, attention_weights};
pub use remote::{
    EncodePairRequest, EncodePairResponse, EncodeSingleRequest, EncodeSingleResponse, HealthResponse,
    RemoteEncoder,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Builtin,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub backend: Backend,
    pub dim: usize,
    pub max_tokens: usize,
    pub per_record_budget: usize,
    pub remote_url: Option<String>,
    /// Seed of the builtin token hashing.
    pub seed: u64,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::builtin(256)
    }
}

/// Per-record token budget leaving room for one `[CLS]` and two `[SEP]`.
pub fn default_budget(max_tokens: usize) -> usize {
    max_tokens.saturating_sub(3) / 2
}

impl EncoderConfig {
    pub fn builtin(dim: usize) -> Self {
        Self {
            backend: Backend::Builtin,
            dim,
            max_tokens: 512,
            per_record_budget: default_budget(512),
            remote_url: None,
            seed: BUILTIN_DEFAULT_SEED,
            timeout_secs: 30,
            retries: 2,
        }
    }

    pub fn remote(url: impl Into<String>, dim: usize) -> Self {
        Self {
            backend: Backend::Remote,
            remote_url: Some(url.into()),
            ..Self::builtin(dim)
        }
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        let bad = |msg: String| Err(EncodingError::Config(msg));
        if self.dim == 0 || self.max_tokens == 0 || self.per_record_budget == 0 {
            return bad("dim, max_tokens and per_record_budget must be positive".into());
        }
        if 2 * self.per_record_budget + 3 > self.max_tokens {
            return bad(format!(
                "2 * per_record_budget + 3 = {} exceeds max_tokens {}",
                2 * self.per_record_budget + 3,
                self.max_tokens
            ));
        }
        match self.backend {
            Backend::Builtin if self.dim < 16 => bad(format!("builtin encoder needs dim >= 16, got {}", self.dim)),
            Backend::Remote if self.remote_url.is_none() => bad("remote backend needs remote_url".into()),
            _ => Ok(()),
        }
    }
}

/// Identity of the encoder a checkpoint was trained against.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderFingerprint {
    pub backend: Backend,
    pub dim: usize,
    pub model_id: String,
}

/// Joint encoding of `[CLS] a [SEP] b [SEP]`; special positions excluded
/// from the token matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEncoding {
    pub cls_vector: Array1<f64>,
    pub tokens_a: Array2<f64>,
    pub tokens_b: Array2<f64>,
    pub truncated_a: bool,
    pub truncated_b: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleEncoding {
    pub summary_vector: Array1<f64>,
    pub tokens: Array2<f64>,
}

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("encoder service unreachable at {url}: {message}")]
    Unreachable { url: String, message: String },
    #[error("encoder service returned HTTP {status}: {message}")]
    Service { status: u16, message: String },
    #[error("encoder response dimension {got} does not match configured {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed encoder response: {0}")]
    Protocol(String),
}

impl EncodingError {
    /// Transport failures and overload responses are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            EncodingError::Unreachable { .. } | EncodingError::Service { status: 503, .. }
        )
    }
}

pub trait Encoder: Send + Sync {
    fn fingerprint(&self) -> EncoderFingerprint;
    fn dim(&self) -> usize;
    fn encode_pair_text(&self, a: &str, b: &str) -> Result<PairEncoding, EncodingError>;
    fn encode_single_text(&self, text: &str) -> Result<SingleEncoding, EncodingError>;

    fn encode_pair(&self, a: &Record, b: &Record) -> Result<PairEncoding, EncodingError> {
        self.encode_pair_text(&a.text, &b.text)
    }

    fn encode_single(&self, r: &Record) -> Result<SingleEncoding, EncodingError> {
        self.encode_single_text(&r.text)
    }
}

pub fn build_encoder(config: &EncoderConfig) -> Result<Box<dyn Encoder>, EncodingError> {
    config.validate()?;
    Ok(match config.backend {
        Backend::Builtin => Box::new(BuiltinEncoder::new(config.clone())?),
        Backend::Remote => Box::new(RemoteEncoder::new(config.clone())?),
    })
}

fn l2_normalize(v: &mut Array1<f64>) {
    let norm = v.dot(v).sqrt();
    if norm > 0.0 {
        v.mapv_inplace(|x| x / norm);
    }
}
