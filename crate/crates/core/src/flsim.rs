//! Functional-location (FL) code similarity.
//!
//! FL codes are hierarchical machinery identifiers; the longer the common
//! prefix of two codes, the closer the equipment. The normalized prefix
//! overlap is snapped to one of `n_bins` levels whose rows in a trainable
//! embedding table form the FL block of the pair feature.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Treatment of absent or empty codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    ZeroSimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlConfig {
    pub n_bins: usize,
    pub embed_dim: usize,
    pub missing_policy: MissingPolicy,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            n_bins: 11,
            embed_dim: 50,
            missing_policy: MissingPolicy::ZeroSimilarity,
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<(), FlError> {
        if self.n_bins < 2 || self.embed_dim == 0 {
            return Err(FlError::Config(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FlError {
    #[error("similarity {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid FL configuration {0:?}: need n_bins >= 2 and embed_dim >= 1")]
    Config(FlConfig),
}

/// Longest common prefix length (in characters) over the longer code's
/// length. Codes are trimmed; a missing or empty code scores 0.
pub fn fl_similarity(f_i: Option<&str>, f_j: Option<&str>) -> f64 {
    let (Some(a), Some(b)) = (f_i.map(str::trim), f_j.map(str::trim)) else {
        return 0.0;
    };
    let len_a = a.chars().count();
    let len_b = b.chars().count();
    let longest = len_a.max(len_b);
    if len_a == 0 || len_b == 0 {
        return 0.0;
    }
    let overlap = a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count();
    overlap as f64 / longest as f64
}

/// Nearest of `n_bins` equally spaced levels `{0, 1/(n_bins-1), …, 1}`.
pub fn fl_bin(sim: f64, n_bins: usize) -> Result<usize, FlError> {
    if !(0.0..=1.0).contains(&sim) {
        return Err(FlError::OutOfRange(sim));
    }
    let top = n_bins - 1;
    Ok(((sim * top as f64 + 0.5).floor() as usize).min(top))
}

/// Trainable `[n_bins, embed_dim]` bin embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct FlEmbeddingTable {
    pub table: Array2<f64>,
}

impl FlEmbeddingTable {
    /// Uniform initialization in `[-0.1, 0.1]`.
    pub fn init(config: &FlConfig, rng: &mut ChaCha8Rng) -> Self {
        let table = Array2::from_shape_fn((config.n_bins, config.embed_dim), |_| {
            rng.random_range(-0.1..=0.1)
        });
        Self { table }
    }

    pub fn n_bins(&self) -> usize {
        self.table.nrows()
    }

    pub fn row(&self, bin: usize) -> ArrayView1<'_, f64> {
        self.table.row(bin)
    }
}

/// Bin index of a code pair.
pub fn fl_pair_bin(f_i: Option<&str>, f_j: Option<&str>, n_bins: usize) -> usize {
    fl_bin(fl_similarity(f_i, f_j), n_bins).expect("similarity lies in [0, 1]")
}

/// Embedding row selected by the pair's similarity bin.
pub fn fl_feature<'t>(
    f_i: Option<&str>,
    f_j: Option<&str>,
    table: &'t FlEmbeddingTable,
) -> ArrayView1<'t, f64> {
    table.row(fl_pair_bin(f_i, f_j, table.n_bins()))
}
