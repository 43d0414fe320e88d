use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{encode_pair, EncodedPair};
use super::network::predict;
use super::{Checkpoint, ScorerError};
use crate::corpus::{Corpus, SubtopicWindow};
use crate::encoding::Encoder;
use crate::pairgen::candidate_pairs_for_inference;

/// Pairs are scored in chunks of this size regardless of thread count, so
/// results never depend on parallelism.
pub(crate) const PREDICT_CHUNK: usize = 64;

/// Anything that assigns a link score to ordered record pairs.
pub trait PairScorer: Sync {
    fn score_pairs(&self, corpus: &Corpus, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError>;
}

/// Trained network bound to the encoder it was trained with.
pub struct ModelScorer<'e> {
    checkpoint: Checkpoint,
    encoder: &'e dyn Encoder,
}

impl<'e> ModelScorer<'e> {
    pub fn new(checkpoint: Checkpoint, encoder: &'e dyn Encoder) -> Result<Self, ScorerError> {
        let active = encoder.fingerprint();
        if active != checkpoint.fingerprint {
            return Err(ScorerError::FingerprintMismatch {
                expected: checkpoint.fingerprint.clone(),
                got: active,
            });
        }
        Ok(Self { checkpoint, encoder })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    fn score_chunk(&self, corpus: &Corpus, chunk: &[(String, String)]) -> Result<Vec<f64>, ScorerError> {
        let arch = self.checkpoint.params.arch;
        let n_bins = self.checkpoint.train_config.fl.n_bins;
        let encoded = chunk
            .iter()
            .map(|(a, b)| {
                let ra = corpus.record(a).ok_or_else(|| ScorerError::UnknownRecord(a.clone()))?;
                let rb = corpus.record(b).ok_or_else(|| ScorerError::UnknownRecord(b.clone()))?;
                encode_pair(arch, self.encoder, ra, rb, n_bins)
            })
            .collect::<Result<Vec<EncodedPair>, _>>()?;
        let refs: Vec<&EncodedPair> = encoded.iter().collect();
        predict(&self.checkpoint.params, &refs)
    }
}

impl PairScorer for ModelScorer<'_> {
    fn score_pairs(&self, corpus: &Corpus, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError> {
        let chunks: Vec<Vec<f64>> = pairs
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| self.score_chunk(corpus, chunk))
            .collect::<Result<_, _>>()?;
        Ok(chunks.concat())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkScore {
    pub from: String,
    pub to: String,
    pub score: f64,
}

/// Sparse directional score map keyed by `(earlier, later)` record ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairScores(BTreeMap<(String, String), f64>);

impl PairScores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: impl Into<String>, b: impl Into<String>, score: f64) {
        self.0.insert((a.into(), b.into()), score);
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.0.get(&(a.to_string(), b.to_string())).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.0.iter().map(|((a, b), s)| (a.as_str(), b.as_str(), *s))
    }

    pub fn to_links(&self) -> Vec<LinkScore> {
        self.iter()
            .map(|(a, b, s)| LinkScore {
                from: a.to_string(),
                to: b.to_string(),
                score: s,
            })
            .collect()
    }
}

impl FromIterator<((String, String), f64)> for PairScores {
    fn from_iter<I: IntoIterator<Item = ((String, String), f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Scores exactly the forward candidate pairs of the window within
/// `max_gap_hours`.
pub fn score_matrix(
    scorer: &dyn PairScorer,
    corpus: &Corpus,
    window: &SubtopicWindow,
    max_gap_hours: f64,
) -> Result<PairScores, ScorerError> {
    let pairs = candidate_pairs_for_inference(corpus, window, max_gap_hours)
        .map_err(|e| ScorerError::Config(e.to_string()))?;
    let scores = scorer.score_pairs(corpus, &pairs)?;
    Ok(pairs.into_iter().zip(scores).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
}

/// Sweeps every distinct score as a cut (`score ≥ cut` is positive) and
/// returns the cut with the highest binary F1, preferring the lowest cut on
/// ties.
pub fn select_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdChoice, ScorerError> {
    if scores.len() != labels.len() {
        return Err(ScorerError::LengthMismatch {
            predictions: scores.len(),
            labels: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(ScorerError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = ThresholdChoice {
        threshold: f64::NAN,
        f1: -1.0,
    };
    let mut k = 0;
    while k < order.len() {
        let cut = scores[order[k]];
        while k < order.len() && scores[order[k]] == cut {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let fn_ = n_pos - tp;
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        if f1 >= best.f1 {
            best = ThresholdChoice { threshold: cut, f1 };
        }
    }
    Ok(best)
}
